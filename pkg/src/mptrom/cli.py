"""Command-line entry point: ``mptrom <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical failure.
"""

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .adapt import AdaptConfig, run_adaptive
from .certify import ResidualFactorization, StabilityConstant, certify_sweep, estimate_alpha_lb
from .errors import ConfigError, MptromError, UnsupportedForIngestedModel
from .fom import MaterialParams, MeshGrading, build_radial_sphere_fom, load_fom_from_files
from .mpt import (
    MptTensor,
    SpectralSignature,
    compute_N0,
    fmm_blocks,
    frobenius_error,
    im_blocks,
    read_signature_csv,
    scale_tensor,
    wait_sphere_oracle,
    write_invariants_csv,
    write_signature_csv,
)
from .pod import PodRom, rom_blocks, solve_many

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class Stage:
    """Tracks the pipeline stage named in error messages and accumulates timings."""

    def __init__(self):
        self.name = "setup"
        self.timings = {}
        self._t = None

    def enter(self, name):
        self.stop()
        self.name = name
        self._t = time.perf_counter()

    def stop(self):
        if self._t is not None:
            self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self._t
            self._t = None

    def add(self, name, seconds):
        self.timings[name] = self.timings.get(name, 0.0) + seconds


def build_model(cfg):
    m = cfg["model"]
    if m["source"] == "manifest":
        return load_fom_from_files(m["manifest"])
    mat = MaterialParams(m["alpha"], m["sigma_star"], m["mu_r"], cfg["tolerances"]["epsilon"])
    g = m["grading"]
    grading = MeshGrading.for_target(g["scheme"], g["L"], g["omega_target"], mat)
    return build_radial_sphere_fom(
        mat,
        grading,
        order_p=m["order_p"],
        outer_radius=m["outer_radius"],
        n_interior=m["n_interior"],
        n_exterior=m["n_exterior"],
    )


def _stability(cfg, fom, freqs):
    c = cfg["certificate"]
    if c["alpha_lb"] is not None:
        return StabilityConstant(float(c["alpha_lb"]), "user_supplied")
    return estimate_alpha_lb(fom, np.geomspace(freqs[0], freqs[-1], c["n_probes"]))


def _write_report(out, cfg, stage, total, extra):
    timings = dict(stage.timings)
    report = {"timings": {**timings, "total": total}, "config": cfg, **extra}
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_signature(cfg, stage):
    t_start = time.perf_counter()
    out = Path(cfg["output_dir"])
    stage.enter("model")
    fom = build_model(cfg)
    freqs = cfgmod.output_frequencies(cfg)
    method = cfg["method"]
    tol = cfg["tolerances"]
    extra = {"n_dofs": fom.n_dofs, "method": method, "solutions": cfg["solutions"]}
    N0 = compute_N0(fom)
    rom = None
    if cfg["solutions"] == "podp":
        stage.enter("offline_solve")
        rom = PodRom.build(
            fom, cfgmod.snapshot_frequencies(cfg), tol["tol_sigma"], tol["rel_tol"], cfg["parallel"]
        )
        stage.stop()
        # the ROM records its own split between solves and SVD/projection
        stage.timings["offline_solve"] = rom.timings["offline_solve"]
        stage.add("svd_projection", rom.timings["svd_projection"])
        extra["M"] = list(rom.M)
        stage.name = "online_solve"
        R, I = rom_blocks(rom, freqs, method, stage.timings)
    else:
        stage.enter("online_solve")
        sols = solve_many(fom, freqs, tol["rel_tol"], cfg["parallel"])
        stage.enter("postprocessing")
        blocks = im_blocks if method == "IM" else fmm_blocks
        R = np.empty((len(freqs), 3, 3))
        I = np.empty((len(freqs), 3, 3))
        for n, w in enumerate(freqs):
            R[n], I[n] = blocks(fom, sols[n], w)
        stage.stop()
    tensors = [MptTensor(w, N0, R[n], I[n]) for n, w in enumerate(freqs)]
    certs = None
    if cfg["certify"]:
        if rom is None:
            raise ConfigError("certify: certificates require solutions = podp")
        stage.enter("certification")
        stab = _stability(cfg, fom, freqs)
        fac = ResidualFactorization(fom, rom.basis, cfg["certificate"]["norm"])
        certs = certify_sweep(rom, fac, stab, freqs)
        extra["alpha_lb"] = stab.alpha_lb
    sig = SpectralSignature(freqs, tensors, method, certs)
    stage.enter("io")
    out.mkdir(parents=True, exist_ok=True)
    write_signature_csv(out / "signature.csv", sig)
    write_invariants_csv(out / "invariants.csv", sig)
    stage.stop()
    _write_report(out, cfg, stage, time.perf_counter() - t_start, extra)
    return sig


def cmd_adapt(cfg, stage):
    t_start = time.perf_counter()
    out = Path(cfg["output_dir"])
    stage.enter("model")
    fom = build_model(cfg)
    freqs = cfgmod.output_frequencies(cfg)
    a = cfg["adapt"]
    tol = cfg["tolerances"]
    acfg = AdaptConfig(
        tol_delta=tol["tol_delta"],
        n_star=a["n_star"],
        max_k=a["max_k"],
        theta=a["theta"],
        output_frequencies=freqs,
        normalization=a["normalization"],
        window=tuple(a["window"]) if a["window"] else None,
    )
    stage.enter("stability")
    stab = _stability(cfg, fom, freqs)
    stage.enter("adaptation")
    rom, sig, state = run_adaptive(
        fom,
        cfgmod.snapshot_frequencies(cfg),
        acfg,
        tol["tol_sigma"],
        tol["rel_tol"],
        stab,
        cfg["certificate"]["norm"],
        cfg["parallel"],
    )
    stage.enter("io")
    out.mkdir(parents=True, exist_ok=True)
    for k, s in sorted(state.signatures.items()):
        write_signature_csv(out / f"signature_k{k}.csv", s)
    (out / "adapt_state.json").write_text(state.to_json(), encoding="utf-8")
    stage.stop()
    _write_report(out, cfg, stage, time.perf_counter() - t_start, {"n_dofs": fom.n_dofs, "M": list(rom.M)})
    return state


def cmd_oracle(cfg, stage):
    if cfg["model"]["source"] != "radial_sphere":
        raise UnsupportedForIngestedModel("oracle comparison needs the built-in radial sphere model")
    t_start = time.perf_counter()
    out = Path(cfg["output_dir"])
    stage.enter("model")
    fom = build_model(cfg)
    freqs = cfgmod.output_frequencies(cfg)
    stage.enter("online_solve")
    sols = solve_many(fom, freqs, cfg["tolerances"]["rel_tol"], cfg["parallel"])
    stage.enter("postprocessing")
    N0 = compute_N0(fom)
    floor = cfg["oracle"]["abs_floor"] * fom.materials.alpha ** 3
    rows = []
    for n, w in enumerate(freqs):
        R, I = fmm_blocks(fom, sols[n], w)
        E = frobenius_error(MptTensor(w, N0, R, I), wait_sphere_oracle(fom.materials, w), floor)
        rows.append((w, E))
    stage.enter("io")
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "oracle_compare.csv", ["omega", "E"], rows)
    stage.stop()
    _write_report(out, cfg, stage, time.perf_counter() - t_start, {"n_dofs": fom.n_dofs, "max_E": max(e for _, e in rows)})
    return rows


def convergence_rows(cfg, parallel=1):
    """E for every (mu_r, scheme, L, order) combination of the study."""
    from .errors import InvalidGrading

    conv = cfg["convergence"]
    m = cfg["model"]
    omegas = conv["omegas"] or [m["grading"]["omega_target"]]
    rows, skipped = [], []
    for mu in conv["mu_r"]:
        mat = MaterialParams(m["alpha"], m["sigma_star"], float(mu), cfg["tolerances"]["epsilon"])
        for scheme in conv["schemes"]:
            for L in conv["L"]:
                for p in conv["orders"]:
                    t0 = time.perf_counter()
                    try:
                        grading = MeshGrading.for_target(scheme, L, m["grading"]["omega_target"], mat)
                        fom = build_radial_sphere_fom(
                            mat, grading, p, m["outer_radius"], m["n_interior"], m["n_exterior"]
                        )
                    except InvalidGrading as exc:
                        skipped.append({"mu_r": mu, "scheme": scheme, "L": L, "p": p, "reason": str(exc)})
                        continue
                    sols = solve_many(fom, omegas, cfg["tolerances"]["rel_tol"], parallel)
                    N0 = compute_N0(fom)
                    E = max(
                        frobenius_error(
                            MptTensor(w, N0, *fmm_blocks(fom, sols[n], w)),
                            wait_sphere_oracle(mat, w),
                            cfg["oracle"]["abs_floor"] * mat.alpha ** 3,
                        )
                        for n, w in enumerate(omegas)
                    )
                    rows.append((float(mu), scheme, L, p, fom.n_dofs, E, time.perf_counter() - t0))
    return rows, skipped


def cmd_convergence(cfg, stage):
    if cfg["model"]["source"] != "radial_sphere":
        raise UnsupportedForIngestedModel("the convergence study needs the built-in radial sphere model")
    t_start = time.perf_counter()
    out = Path(cfg["output_dir"])
    stage.enter("study")
    rows, skipped = convergence_rows(cfg, cfg["parallel"])
    stage.enter("io")
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "convergence.csv", ["mu_r", "scheme", "L", "p", "n_dofs", "E", "wall_time"], rows)
    stage.stop()
    _write_report(out, cfg, stage, time.perf_counter() - t_start, {"skipped": skipped})
    return rows


def cmd_scale(path, s, output):
    sig = read_signature_csv(path)
    scaled = scale_tensor(sig, s)
    write_signature_csv(output, scaled)
    return scaled


def cmd_ingest_check(manifest):
    fom = load_fom_from_files(manifest)
    return {
        "n_dofs": fom.n_dofs,
        "shared_basis": fom.shared_basis,
        "has_norm_matrix": fom.S is not None,
        "materials": fom.materials.to_dict(),
    }


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _parser():
    p = argparse.ArgumentParser(prog="mptrom", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def pipeline(name, help_):
        sp_ = sub.add_parser(name, help=help_)
        sp_.add_argument("--config", help="JSON run configuration")
        sp_.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a configuration key, e.g. sweep.n_output=40")
        sp_.add_argument("--output-dir")
        sp_.add_argument("--method", choices=["IM", "FMM", "MM"])
        sp_.add_argument("--parallel", type=int)
        sp_.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
        return sp_

    pipeline("signature", "compute an MPT spectral signature")
    pipeline("adapt", "adaptive PODP with certificates")
    pipeline("oracle", "compare the radial sphere model against the analytic solution")
    pipeline("convergence", "boundary-layer grading study")
    sc = sub.add_parser("scale", help="rescale a signature CSV to an object scaled by s")
    sc.add_argument("signature")
    sc.add_argument("--s", type=float, required=True)
    sc.add_argument("--output", "-o", required=True)
    ic = sub.add_parser("ingest-check", help="validate a matrix manifest")
    ic.add_argument("manifest")
    return p


COMMANDS = {
    "signature": cmd_signature,
    "adapt": cmd_adapt,
    "oracle": cmd_oracle,
    "convergence": cmd_convergence,
}


def _exit_code(exc):
    if isinstance(exc, (np.linalg.LinAlgError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ConfigError, ValueError, KeyError, OSError)):
        return EXIT_CONFIG
    if isinstance(exc, NotImplementedError):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def main(argv=None):
    args = _parser().parse_args(argv)
    stage = Stage()
    try:
        if args.command == "scale":
            stage.name = "scale"
            if not args.s > 0:
                raise ConfigError("--s must be positive")
            cmd_scale(args.signature, args.s, args.output)
            return EXIT_OK
        if args.command == "ingest-check":
            stage.name = "ingest"
            print(json.dumps(cmd_ingest_check(args.manifest), indent=2))
            return EXIT_OK
        stage.name = "config"
        overrides = list(args.set)
        if args.output_dir:
            overrides.append(f"output_dir={json.dumps(args.output_dir)}")
        if args.method:
            overrides.append(f"method={json.dumps(args.method)}")
        if args.parallel is not None:
            overrides.append(f"parallel={args.parallel}")
        cfg = cfgmod.load_config(args.config, overrides)
        if args.dump_config:
            sys.stdout.write(cfgmod.dump(cfg))
            return EXIT_OK
        COMMANDS[args.command](cfg, stage)
        return EXIT_OK
    except (MptromError, ValueError, KeyError, OSError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"mptrom: error in stage '{stage.name}': {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
