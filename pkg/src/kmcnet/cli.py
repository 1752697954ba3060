"""Command-line entry point (``kmcnet``)."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import experiments as ex
from .analysis import poisson_pmf
from .config import ConfigError, load_config
from .io import CheckpointError, load_checkpoint, write_outputs
from .kmc import Limits
from .simulation import Simulation

log = logging.getLogger("kmcnet")


def _seeds(args) -> list[int]:
    return list(range(args.seed, args.seed + args.seeds))


def _out_dir(args) -> Optional[Path]:
    if args.out is None:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_table(path: Optional[Path], name: str, header: str, rows) -> None:
    if path is None:
        return
    with open(path / name, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(" ".join(repr(x) if isinstance(x, float) else str(x) for x in r) + "\n")


def cmd_run(args) -> int:
    if args.resume:
        sim = load_checkpoint(args.resume)
        log.info("resumed at t=%r after %d steps", sim.clock.sim_time, sim.clock.step_count)
    else:
        if args.config is None:
            raise SystemExit("run: --config is required unless --resume is given")
        cfg = load_config(args.config)
        if args.max_sim_time is not None:
            cfg = dataclasses.replace(cfg, max_sim_time=args.max_sim_time)
        if args.seeds > 1:
            seeds = _seeds(args) if args.seed is not None else list(
                range(cfg.seed, cfg.seed + args.seeds))
            res = ex.run_replicas(cfg, seeds, out_dir=args.out, workers=args.workers)
            out = _out_dir(args)
            for d, pmf in res.aggregate.items():
                _write_table(out, f"aggregate_{d}.dat", "# k P(k)", sorted(pmf.items()))
            print(f"ran {len(seeds)} replicas (seeds {seeds[0]}..{seeds[-1]})")
            return 0
        sim = Simulation(cfg, seed=args.seed)
    cfg = sim.config
    max_t = args.max_sim_time if args.max_sim_time is not None else cfg.max_sim_time
    t0 = time.monotonic()
    sim.run(Limits(max_sim_time=max_t, max_wall_time=cfg.max_wall_time,
                   max_agents=cfg.max_agents))
    wall = time.monotonic() - t0
    out = args.out or "output"
    write_outputs(sim, out)
    print(f"t={sim.clock.sim_time!r} steps={sim.clock.step_count} agents={len(sim.pop)} "
          f"edges={sim.network.edge_count} rebroadcasts={sim.diffusion.rebroadcast_count} "
          f"wall={wall:.1f}s -> {out}")
    return 0


def cmd_validate_random(args) -> int:
    n = args.agents or 10_000
    res = ex.validate_random(n, args.mean_degree, _seeds(args), workers=args.workers)
    ok = True
    for s, d in res.ks.items():
        flag = d < args.threshold
        ok &= flag
        print(f"seed {s}: KS distance to Poisson({res.mean_degree:g}) = {d:.5f} "
              f"{'ok' if flag else 'FAIL'}")
    out = _out_dir(args)
    if out is not None:
        for s, h in res.histograms.items():
            rows = [(k, c, c / h.n_agents, poisson_pmf(res.mean_degree, k))
                    for k, c in h.counts.items()]
            _write_table(out, f"random_seed_{s}.dat", "# k count P(k) poisson(k)", rows)
    return 0 if ok else 1


def cmd_validate_preferential(args) -> int:
    n = args.agents or 50_000
    res = ex.validate_preferential(n, _seeds(args), args.k_min, workers=args.workers)
    f = res.fit
    ok = 2.5 <= f.gamma <= 3.5
    print(f"gamma = {f.gamma:.3f} (k_min={res.k_min}, bins={f.bins}, R^2={f.r_squared:.4f}) "
          f"{'ok' if ok else 'outside [2.5, 3.5]'}")
    _write_table(_out_dir(args), "preferential_aggregate.dat", "# k P(k)",
                 sorted(res.aggregate.items()))
    return 0 if ok else 1


def cmd_followback(args) -> int:
    n = args.agents or 10_000
    ps = args.followback if args.followback else [0.0, 0.5, 1.0]
    res = ex.experiment_followback(ps, n, _seeds(args), workers=args.workers)
    out = _out_dir(args)
    for p, r in res.items():
        gamma = f"{r.fit.gamma:.3f}" if r.fit else "n/a"
        print(f"p={p:g}: odd mass {r.odd_mass:.5f}, even mass {r.even_mass:.5f}, "
              f"odd-degree agents {r.odd_agents}, gamma {gamma}")
        _write_table(out, f"followback_p{p:g}.dat", "# k P(k)", sorted(r.aggregate.items()))
    return 0


def cmd_viral(args) -> int:
    alphas = ex.alpha_grid(args.alpha_min, args.alpha_max, args.alpha_step)
    follows = list(range(args.follows_min, args.follows_max + 1, args.follows_step))
    params = ex.ViralParams(n_agents=args.agents or 1000, tweets=args.tweets)
    res = ex.experiment_viral(alphas, follows, args.omega, _seeds(args), params,
                              workers=args.workers)
    text = res.to_csv()
    out = _out_dir(args)
    if out is not None:
        kind = args.omega.split(":")[0]
        (out / f"viral_{kind}.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_star(args) -> int:
    alphas = args.alpha or [0.1, 0.5, 1.0]
    res = ex.experiment_star(alphas, args.agents or 1000, _seeds(args), args.hazard,
                             workers=args.workers)
    for a, r in res.items():
        print(f"alpha={a:g}: mean first-generation rebroadcasts {r.mean:.2f}, "
              f"expected {r.expected:.1f}, relative error {r.relative_error:.4f}")
    return 0


def cmd_bench(args) -> int:
    r = ex.bench(args.agents or 1_000_000, seed=args.seed)
    print(f"agents={r.agents} edges={r.edges} events={r.events} "
          f"wall={r.wall_seconds:.1f}s peak_rss={r.peak_rss_mb:.0f}MB")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kmcnet", description="Kinetic Monte Carlo simulator "
                                "of growing social networks and information cascades.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds: int, seed: Optional[int] = 0):
        sp.add_argument("--seed", type=int, default=seed, help="first seed")
        sp.add_argument("--seeds", type=int, default=seeds, help="number of replicas")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--agents", type=int, help="number of agents")
        sp.add_argument("--workers", type=int, default=1, help="replica processes")

    sp = sub.add_parser("run", help="run one simulation from a config file")
    common(sp, 1, None)
    sp.add_argument("--config", help="YAML config file")
    sp.add_argument("--max-sim-time", type=float, help="stop at this simulated time")
    sp.add_argument("--resume", help="continue from a checkpoint file")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate-random", help="random-model degree distribution vs Poisson")
    common(sp, 5)
    sp.add_argument("--mean-degree", type=float, default=20.0)
    sp.add_argument("--threshold", type=float, default=0.02)
    sp.set_defaults(func=cmd_validate_random)

    sp = sub.add_parser("validate-preferential", help="power-law exponent of preferential growth")
    common(sp, 10)
    sp.add_argument("--k-min", type=int, default=10)
    sp.set_defaults(func=cmd_validate_preferential)

    sp = sub.add_parser("followback", help="degree parity under follow-back")
    common(sp, 10)
    sp.add_argument("--followback", type=float, action="append",
                    help="follow-back probability (repeatable; default 0, 0.5, 1)")
    sp.set_defaults(func=cmd_followback)

    sp = sub.add_parser("viral", help="mean rebroadcasts over an (alpha, follows) grid")
    common(sp, 10)
    sp.add_argument("--alpha-min", type=float, default=0.005)
    sp.add_argument("--alpha-max", type=float, default=0.05)
    sp.add_argument("--alpha-step", type=float, default=0.01125)
    sp.add_argument("--follows-min", type=int, default=10_000)
    sp.add_argument("--follows-max", type=int, default=90_000)
    sp.add_argument("--follows-step", type=int, default=20_000)
    sp.add_argument("--tweets", type=float, default=ex.ViralParams.tweets,
                    help="expected original tweets per run at the largest follow total")
    sp.add_argument("--omega", default="exp", help="exp, reciprocal or table:PATH")
    sp.set_defaults(func=cmd_viral)

    sp = sub.add_parser("star", help="first-generation rebroadcasts on a frozen star graph")
    common(sp, 100)
    sp.add_argument("--alpha", type=float, action="append")
    sp.add_argument("--hazard", choices=("conditional", "literal"), default="conditional")
    sp.set_defaults(func=cmd_star)

    sp = sub.add_parser("bench", help="time a large random-model growth run")
    common(sp, 1)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
