"""Command-line interface: experiment configs, figure presets, size tables,
layout tools, and the numerical verification suite.

Outputs are deterministic for a given config: per-trial substreams depend
only on (seed, trial index), so the CSVs are byte-identical whatever the
worker count. Nothing is written unless the whole run succeeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import PolicySpec, allocation_size, build_allocation, conventional
from .channel import PURPOSE_LAYOUT, draw_channel, pathloss_matrix, trial_rng
from .evaluation import (
    ExperimentResult,
    RejectionRateError,
    db_to_linear,
    dof_slope,
    evaluate_curves,
)
from .oracle import run_verification
from .topology import (
    NodeLayout,
    cooperation_radius,
    data_sharing_sets,
    interference_levels,
    load_layout,
    pairwise_distance,
    place_grid,
    place_uniform_random,
    save_layout,
)

__all__ = [
    "ExperimentConfig",
    "resolve_layout",
    "run_experiment",
    "report_sizes",
    "fig1_desk_config",
    "fig1_full_config",
    "fig2_desk_config",
    "fig2_full_config",
    "main",
]

DEFAULT_SNR_DB = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0]


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a rate experiment exactly.

    The worker count is deliberately not part of the config: it affects
    scheduling only, never results.
    """

    seed: int = 1
    layout_kind: str = "grid"          # grid | random | file
    grid_side: int = 4
    random_k: int = 8
    random_side: float = 4.0
    layout_path: str | None = None
    gamma: float = 0.6
    snr_db: list[float] = field(default_factory=lambda: list(DEFAULT_SNR_DB))
    trials: int = 500
    policies: list[PolicySpec] = field(
        default_factory=lambda: [PolicySpec("perfect"), PolicySpec("distance")]
    )
    fit_points: int = 4
    cond_threshold: float = 1e12
    max_rejection_rate: float = 0.01
    data_mask: bool = False
    output: str = "netmimo-out"

    def validate(self) -> None:
        if self.layout_kind not in ("grid", "random", "file"):
            raise ValueError(f"unknown layout kind {self.layout_kind!r}")
        if self.layout_kind == "file" and not self.layout_path:
            raise ValueError("layout_kind 'file' needs layout_path")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.snr_db:
            raise ValueError("snr_db must be non-empty")
        if min(self.snr_db) <= 0.0:
            raise ValueError("all SNR points must be > 0 dB (the pathloss model needs P > 1)")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.policies:
            raise ValueError("at least one policy is required")
        if self.fit_points < 2:
            raise ValueError(f"fit_points must be >= 2, got {self.fit_points}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data["policies"] = [
            p if isinstance(p, PolicySpec) else PolicySpec(**p) for p in data.get("policies", [])
        ]
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def resolve_layout(config: ExperimentConfig) -> NodeLayout:
    """Build the layout a config describes; random layouts derive from the seed."""
    if config.layout_kind == "grid":
        return place_grid(config.grid_side)
    if config.layout_kind == "random":
        rng = trial_rng(config.seed, 0, PURPOSE_LAYOUT)
        return place_uniform_random(config.random_k, config.random_side, rng)
    return load_layout(config.layout_path)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def compute_size_table(
    layout: NodeLayout, gamma: float, policies: list[PolicySpec], snr_db: list[float]
) -> list[dict]:
    """Allocation sizes and ratios against the conventional policy.

    The conventional reference row is always included; the perfect policy has
    no finite size and is skipped.
    """
    rows = []
    dist = pairwise_distance(layout)
    levels = interference_levels(dist, gamma)
    specs = [PolicySpec("conventional")]
    specs += [s for s in policies if s.kind not in ("perfect", "conventional")]
    for db in snr_db:
        p = db_to_linear(db)
        ref = allocation_size(conventional(levels, p), p)
        for spec in specs:
            size = allocation_size(build_allocation(spec, layout, gamma, p), p)
            rows.append(
                {
                    "policy": spec.kind,
                    "alpha": spec.alpha if spec.kind == "distance" else None,
                    "snr_db": db,
                    "total_bits": size.total_bits,
                    "prelog": size.prelog,
                    "prelog_asymptotic": size.prelog_asymptotic,
                    "ratio_to_conventional": size.total_bits / ref.total_bits if ref.total_bits else float("nan"),
                    "ratio_asymptotic": (
                        size.prelog_asymptotic / ref.prelog_asymptotic
                        if ref.prelog_asymptotic
                        else float("nan")
                    ),
                }
            )
    return rows


def _size_table_csv(rows: list[dict]) -> str:
    header = "policy,alpha,snr_db,total_bits,prelog,prelog_asymptotic,ratio_to_conventional,ratio_asymptotic"
    lines = [header]
    for r in rows:
        alpha = "" if r["alpha"] is None else _fmt(r["alpha"])
        lines.append(
            ",".join(
                [
                    r["policy"],
                    alpha,
                    _fmt(r["snr_db"]),
                    _fmt(r["total_bits"]),
                    _fmt(r["prelog"]),
                    _fmt(r["prelog_asymptotic"]),
                    _fmt(r["ratio_to_conventional"]),
                    _fmt(r["ratio_asymptotic"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_sizes(config: ExperimentConfig) -> list[dict]:
    config.validate()
    layout = resolve_layout(config)
    return compute_size_table(layout, config.gamma, config.policies, config.snr_db)


def _rates_csv(result: ExperimentResult, policies: list[PolicySpec]) -> str:
    lines = ["policy,alpha,snr_db,user,mean_rate_bits,stderr,trials,rejections"]
    for spec in policies:
        curve = result.curves[spec]
        alpha = _fmt(spec.alpha) if spec.kind == "distance" else ""
        for pt in curve.points:
            for u in range(len(pt.mean_per_user)):
                lines.append(
                    f"{spec.kind},{alpha},{_fmt(pt.snr_db)},{u + 1},"
                    f"{_fmt(pt.mean_per_user[u])},{_fmt(pt.stderr_per_user[u])},"
                    f"{pt.trials},{pt.rejections}"
                )
            lines.append(
                f"{spec.kind},{alpha},{_fmt(pt.snr_db)},avg,"
                f"{_fmt(pt.mean_avg)},{_fmt(pt.stderr_avg)},{pt.trials},{pt.rejections}"
            )
    return "\n".join(lines) + "\n"


def run_experiment(
    config: ExperimentConfig, workers: int = 1, dump_channel: str | None = None
) -> ExperimentResult:
    """Run a config end to end and write rates.csv, metadata.json, layout.txt.

    All outputs are assembled in memory first, so a failing run writes
    nothing. The metadata embeds the config and suffices to re-run the
    experiment exactly.
    """
    config.validate()
    layout = resolve_layout(config)
    result = evaluate_curves(
        layout,
        config.gamma,
        config.policies,
        config.snr_db,
        config.trials,
        config.seed,
        cond_threshold=config.cond_threshold,
        max_rejection_rate=config.max_rejection_rate,
        data_mask=config.data_mask,
        workers=workers,
    )
    csv_text = _rates_csv(result, config.policies)
    size_rows = compute_size_table(layout, config.gamma, config.policies, config.snr_db)
    dof = {}
    for spec in config.policies:
        curve = result.curves[spec]
        if len(curve.points) >= 2:
            est = dof_slope(curve, min(config.fit_points, len(curve.points)))
            dof[spec.label()] = {
                "slope": est.slope,
                "residual": est.residual,
                "fit_snr_db": list(est.fit_snr_db),
            }
    try:
        d0 = cooperation_radius(config.gamma)
    except ValueError:
        d0 = None
    metadata = {
        "tool": {"name": "netmimo", "version": __version__},
        "config": config.to_dict(),
        "layout_positions": layout.positions.tolist(),
        "cooperation_radius": d0,
        "sizes": size_rows,
        "dof": dof,
        "rejections": {
            spec.label(): [pt.rejections for pt in result.curves[spec].points]
            for spec in config.policies
        },
    }

    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rates.csv").write_text(csv_text)
    (out / "metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    save_layout(layout, out / "layout.txt")
    if dump_channel:
        p = db_to_linear(config.snr_db[0])
        model = pathloss_matrix(
            interference_levels(pairwise_distance(layout), config.gamma), p
        )
        chan = draw_channel(model, trial_rng(config.seed, 0, 0))
        lines = ["rx,tx,re,im"]
        for k in range(layout.K):
            for i in range(layout.K):
                lines.append(
                    f"{k + 1},{i + 1},{chan.H[k, i].real:.17g},{chan.H[k, i].imag:.17g}"
                )
        Path(dump_channel).write_text("\n".join(lines) + "\n")
    return result


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def fig1_desk_config(seed: int = 101, trials: int = 500, output: str = "fig1-desk") -> ExperimentConfig:
    """Grid-network policy comparison at desk scale: 4x4 grid, gamma 0.6."""
    return ExperimentConfig(
        seed=seed,
        layout_kind="grid",
        grid_side=4,
        gamma=0.6,
        snr_db=list(DEFAULT_SNR_DB),
        trials=trials,
        policies=[
            PolicySpec("perfect"),
            PolicySpec("distance"),
            PolicySpec("uniform"),
            PolicySpec("cluster", cluster_size=4),
        ],
        fit_points=4,
        output=output,
    )


def fig1_full_config(seed: int = 101, trials: int = 1000, output: str = "fig1-full") -> ExperimentConfig:
    """Full-scale grid comparison: 6x6 grid, gamma 0.6 (slow)."""
    cfg = fig1_desk_config(seed=seed, trials=trials, output=output)
    cfg.grid_side = 6
    return cfg


def fig2_desk_config(seed: int = 202, trials: int = 500, output: str = "fig2-desk") -> ExperimentConfig:
    """Random-network alpha sweep at desk scale: 8 nodes in a 4x4 square, gamma 0.7."""
    return ExperimentConfig(
        seed=seed,
        layout_kind="random",
        random_k=8,
        random_side=4.0,
        gamma=0.7,
        snr_db=list(DEFAULT_SNR_DB),
        trials=trials,
        policies=[
            PolicySpec("perfect"),
            PolicySpec("distance", alpha=0.75),
            PolicySpec("distance", alpha=1.0),
            PolicySpec("distance", alpha=1.25),
        ],
        fit_points=4,
        output=output,
    )


def fig2_full_config(seed: int = 202, trials: int = 1000, output: str = "fig2-full") -> ExperimentConfig:
    """Full-scale random-network alpha sweep: 15 nodes in a 6x6 square (slow)."""
    cfg = fig2_desk_config(seed=seed, trials=trials, output=output)
    cfg.random_k = 15
    cfg.random_side = 6.0
    return cfg


_PRESETS = {
    "fig1-desk": fig1_desk_config,
    "fig1-full": fig1_full_config,
    "fig2-desk": fig2_desk_config,
    "fig2-full": fig2_full_config,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def parse_policy(token: str) -> PolicySpec:
    """Parse CLI policy tokens: perfect, conventional, zero, distance[:alpha],
    cluster[:size], uniform[:support]."""
    kind, _, arg = token.partition(":")
    if kind == "distance":
        return PolicySpec("distance", alpha=float(arg) if arg else 1.0)
    if kind == "cluster":
        return PolicySpec("cluster", cluster_size=int(arg) if arg else 4)
    if kind == "uniform":
        return PolicySpec("uniform", uniform_support=arg or "all")
    if arg:
        raise ValueError(f"policy {kind!r} takes no argument")
    return PolicySpec(kind)


def _add_layout_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--grid-side", type=int, help="square grid side length")
    sp.add_argument("--random-k", type=int, help="number of nodes placed uniformly at random")
    sp.add_argument("--random-side", type=float, default=4.0, help="side of the random square")
    sp.add_argument("--layout-file", help="load node positions from a layout file")


def _layout_from_args(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    if args.layout_file:
        cfg.layout_kind = "file"
        cfg.layout_path = args.layout_file
    elif args.random_k:
        cfg.layout_kind = "random"
        cfg.random_k = args.random_k
        cfg.random_side = args.random_side
    elif args.grid_side:
        cfg.layout_kind = "grid"
        cfg.grid_side = args.grid_side


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    elif getattr(args, "from_metadata", None):
        meta = json.loads(Path(args.from_metadata).read_text())
        cfg = ExperimentConfig.from_dict(meta["config"])
    else:
        cfg = ExperimentConfig()
        _layout_from_args(cfg, args)
        if args.policies:
            cfg.policies = [parse_policy(t) for t in args.policies]
    # Flag overrides apply on top of any config file.
    for name in ("seed", "gamma", "trials", "fit_points", "output"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "snr_db", None):
        cfg.snr_db = [float(s) for s in args.snr_db]
    if getattr(args, "data_mask", False):
        cfg.data_mask = True
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="netmimo",
        description="Network-MIMO simulator with distributed channel-knowledge allocation.",
    )
    parser.add_argument("--version", action="version", version=f"netmimo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a rate experiment")
    run_p.add_argument("--config", help="JSON experiment config")
    run_p.add_argument("--from-metadata", help="re-run the config embedded in a metadata.json")
    _add_layout_args(run_p)
    run_p.add_argument("--policies", nargs="+", help="policy specs, e.g. perfect distance:1.25 cluster:4")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--gamma", type=float)
    run_p.add_argument("--snr-db", nargs="+", type=float)
    run_p.add_argument("--trials", type=int)
    run_p.add_argument("--fit-points", type=int, dest="fit_points")
    run_p.add_argument("--data-mask", action="store_true", help="zero precoder entries beyond the cooperation radius")
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--output")
    run_p.add_argument("--dump-channel", help="also dump one channel realization to this CSV")
    run_p.add_argument("--save-config", help="write the effective config JSON here and exit")

    sizes_p = sub.add_parser("sizes", help="allocation size table")
    sizes_p.add_argument("--config", help="JSON experiment config")
    _add_layout_args(sizes_p)
    sizes_p.add_argument("--policies", nargs="+")
    sizes_p.add_argument("--seed", type=int)
    sizes_p.add_argument("--gamma", type=float)
    sizes_p.add_argument("--snr-db", nargs="+", type=float)
    sizes_p.add_argument("--output", help="write the table CSV here instead of stdout")
    sizes_p.add_argument("--export-bits", help="directory for per-policy (j,k,i,bits) CSV dumps")

    ver_p = sub.add_parser("verify", help="numerical verification suite")
    ver_p.add_argument("--seed", type=int, default=7)
    ver_p.add_argument("--trials", type=int, default=800)
    ver_p.add_argument("--output", help="write the check table CSV here")

    lay_p = sub.add_parser("layout", help="emit or inspect node layouts")
    _add_layout_args(lay_p)
    lay_p.add_argument("--seed", type=int, default=1)
    lay_p.add_argument("--gamma", type=float, default=0.6)
    lay_p.add_argument("--out", help="write the layout file here")
    lay_p.add_argument("--show", help="print a summary of an existing layout file")

    for name in _PRESETS:
        p = sub.add_parser(name, help=f"preset: {_PRESETS[name].__doc__.splitlines()[0]}")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--output")
        p.add_argument("--workers", type=int, default=1)

    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = _config_from_args(args)
        if args.save_config:
            Path(args.save_config).write_text(cfg.to_json() + "\n")
            return 0
        return _cmd_run(cfg, args.workers, args.dump_channel)

    if args.command == "sizes":
        cfg = _config_from_args(args)
        cfg.validate()
        layout = resolve_layout(cfg)
        rows = compute_size_table(layout, cfg.gamma, cfg.policies, cfg.snr_db)
        text = _size_table_csv(rows)
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        if args.export_bits:
            _export_bits(cfg, layout, Path(args.export_bits))
        return 0

    if args.command == "verify":
        results = run_verification(seed=args.seed, trials=args.trials)
        width = max(len(r.name) for r in results)
        lines = ["check,measured,bound,passed"]
        for r in results:
            verdict = "PASS" if r.passed else "FAIL"
            print(f"{r.name:<{width}}  measured {r.measured:>12.4e}  bound {r.bound:>12.4e}  {verdict}  {r.note}")
            lines.append(f"{r.name},{r.measured:.10g},{r.bound:.10g},{str(r.passed).lower()}")
        if args.output:
            Path(args.output).write_text("\n".join(lines) + "\n")
        return 0 if all(r.passed for r in results) else 1

    if args.command == "layout":
        return _cmd_layout(args)

    if args.command in _PRESETS:
        kwargs = {k: v for k, v in (("seed", args.seed), ("trials", args.trials), ("output", args.output)) if v is not None}
        cfg = _PRESETS[args.command](**kwargs)
        return _cmd_run(cfg, args.workers, None)

    parser.error(f"unknown command {args.command!r}")
    return 2


def _cmd_run(cfg: ExperimentConfig, workers: int, dump_channel: str | None) -> int:
    try:
        result = run_experiment(cfg, workers=workers, dump_channel=dump_channel)
    except RejectionRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for spec in cfg.policies:
        curve = result.curves[spec]
        top = curve.points[-1]
        n_fit = min(cfg.fit_points, len(curve.points))
        slope = dof_slope(curve, n_fit).slope if len(curve.points) >= 2 else float("nan")
        print(
            f"{spec.label():<22} top {top.snr_db:g} dB: "
            f"{top.mean_avg:.3f} bits/user (slope {slope:.3f})"
        )
    print(f"wrote {Path(cfg.output) / 'rates.csv'}")
    return 0


def _export_bits(cfg: ExperimentConfig, layout: NodeLayout, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for spec in cfg.policies:
        if spec.kind == "perfect":
            continue
        for db in cfg.snr_db:
            alloc = build_allocation(spec, layout, cfg.gamma, db_to_linear(db))
            lines = ["j,k,i,bits"]
            k = layout.K
            for j in range(k):
                for kk in range(k):
                    for i in range(k):
                        lines.append(f"{j + 1},{kk + 1},{i + 1},{alloc.bits[j, kk, i]:.10g}")
            name = f"bits_{spec.kind}"
            if spec.kind == "distance":
                name += f"_a{spec.alpha:g}"
            name += f"_{db:g}dB.csv"
            (outdir / name).write_text("\n".join(lines) + "\n")


def _cmd_layout(args: argparse.Namespace) -> int:
    if args.show:
        layout = load_layout(args.show)
        dist = pairwise_distance(layout)
        print(f"nodes: {layout.K}")
        print(f"bounding box: x [{layout.positions[:, 0].min():g}, {layout.positions[:, 0].max():g}]"
              f" y [{layout.positions[:, 1].min():g}, {layout.positions[:, 1].max():g}]")
        off = dist[~np.eye(layout.K, dtype=bool)]
        if off.size:
            print(f"pair distance: min {off.min():.4g} max {off.max():.4g}")
        try:
            d0 = cooperation_radius(args.gamma)
            sizes = [len(s) for s in data_sharing_sets(layout, args.gamma)]
            print(f"cooperation radius at gamma {args.gamma:g}: {d0:g}; "
                  f"sharing set sizes min {min(sizes)} max {max(sizes)}")
        except ValueError:
            pass
        return 0
    if args.layout_file:
        layout = load_layout(args.layout_file)
    elif args.random_k:
        layout = place_uniform_random(
            args.random_k, args.random_side, trial_rng(args.seed, 0, PURPOSE_LAYOUT)
        )
    elif args.grid_side:
        layout = place_grid(args.grid_side)
    else:
        print("error: nothing to emit, pass --grid-side or --random-k or --layout-file", file=sys.stderr)
        return 2
    if not args.out:
        print("error: --out is required to emit a layout", file=sys.stderr)
        return 2
    save_layout(layout, args.out)
    print(f"wrote {args.out} ({layout.K} nodes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
