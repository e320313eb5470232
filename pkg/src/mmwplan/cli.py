"""Command-line front end: visibility maps, gNB planning, reflector planning
and reflector sweeps, with deterministic JSON/CSV/PGM artifacts."""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelParams, LinkBudget, mapl, mapl_report
from .gnb import (MODES, CoverageMatrix, path_loss_matrix, plan_gnb, read_weights_csv)
from .pmr import (PmrProblemSpec, gamma_linear, plan_pmr, sweep_pmr)
from .reflector import FarFieldWarning, GainParams, build_gain_tensor, pmr_candidates
from .scenario import (Role, ScenarioError, generate_building_surface_grid,
                       generate_gnb_candidates, generate_service_grid, load_scenario,
                       reference_scenario)
from .visibility import (PGM_BUILDING, VisibilityEngine, raster, stack, visibility_raster,
                         write_pgm, write_visibility_csv)

log = logging.getLogger("mmwplan")

# coverage raster classes
PGM_OUTAGE, PGM_PMR, PGM_GNB = 0, 128, 255

DEFAULTS = {
    "scenario": None,  # path; None selects the bundled reference scenario
    "channel": {},
    "link_budget": {},
    "gamma_db": None,  # None derives the threshold from the link budget
    "mode": "specular",
    "n_gnb": 1,
    "weights": None,
    "gnb_node_limit": None,
    "surface_spacing": 1.0,
    "gamma_sweep": [85, 125, 1],
    "source": None,
    "candidate": None,
    "pmr": {
        "size": 1.0,
        "sizes": [1.0, 2.0, 3.0],
        "facet": 0.1,
        "n_pmr": 12,
        "n_range": [0, 15],
        "summation": "power",
        "angles": "projected",
        "zeta": 2.0,
        "candidate_spacing": 3.0,
        "orient_stride": 4,
        "node_limit": 1,
        "strict_c4": False,
    },
    "seed": 0,
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args) -> dict:
    """Defaults, then the config file, then command-line flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path) as fh:
            user = json.load(fh)
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    flags = {"scenario": args.scenario, "gamma_db": args.gamma_db, "mode": args.mode,
             "n_gnb": args.n_gnb, "weights": getattr(args, "weights", None)}
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    if getattr(args, "n_pmr", None) is not None:
        cfg["pmr"]["n_pmr"] = args.n_pmr
    if getattr(args, "pmr_size", None) is not None:
        cfg["pmr"]["size"] = args.pmr_size
        if args.command == "sweep":
            cfg["pmr"]["sizes"] = [args.pmr_size]
    if getattr(args, "source", None) is not None:
        cfg["source"] = [float(v) for v in args.source.split(",")]
    if getattr(args, "candidate", None) is not None:
        cfg["candidate"] = args.candidate
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    for key in ("scenario", "weights"):
        if cfg[key] is not None and not Path(cfg[key]).is_file():
            raise FileNotFoundError(f"{key} file not found: {cfg[key]}")
    if cfg["n_gnb"] < 1:
        raise ConfigError("n_gnb must be >= 1")
    return cfg


class Run:
    """Pipeline state shared by the subcommands."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.scenario = (load_scenario(cfg["scenario"]) if cfg["scenario"]
                         else reference_scenario())
        self.channel = ChannelParams(**cfg["channel"])
        self.budget = LinkBudget(**cfg["link_budget"])
        self.gamma_db = float(cfg["gamma_db"]) if cfg["gamma_db"] is not None \
            else mapl(self.budget)
        self.sa = generate_service_grid(self.scenario)
        self.cand = generate_gnb_candidates(self.scenario)
        self.surface = generate_building_surface_grid(self.scenario, cfg["surface_spacing"])
        self.engine = VisibilityEngine(self.scenario, self.sa, self.surface)
        self._vis = None
        self.weights = (read_weights_csv(cfg["weights"], len(self.sa))
                        if cfg["weights"] else None)

    @property
    def vis(self):
        if self._vis is None:
            log.info("visibility for %d candidates", len(self.cand))
            self._vis = self.engine.indices(self.cand, diffuse=self.cfg["mode"] == "diffuse"
                                            or self._need_diffuse)
        return self._vis

    _need_diffuse = False

    def path_loss(self, mode: str) -> np.ndarray:
        direct = stack(self.vis, "direct")
        indirect = np.zeros_like(direct) if mode == "direct" else stack(self.vis, mode)
        return path_loss_matrix(self.cand, self.sa, direct, indirect, self.channel,
                                warn_breakpoint=False)

    def resolved(self) -> dict:
        """Configuration as used, for the report."""
        out = copy.deepcopy(self.cfg)
        out["channel"] = asdict(self.channel)
        out["link_budget"] = asdict(self.budget)
        out["gamma_db"] = self.gamma_db
        return out


def _json(obj) -> str:
    def fix(v):
        if isinstance(v, dict):
            return {str(k): fix(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [fix(x) for x in v]
        if isinstance(v, np.ndarray):
            return fix(v.tolist())
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return v if math.isfinite(v) else None
        if isinstance(v, np.bool_):
            return bool(v)
        return v
    return json.dumps(fix(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _f(v: float, digits: int = 6) -> str:
    return "inf" if not math.isfinite(v) else f"{v:.{digits}f}"


def _gnb_section(run: Run, pl: np.ndarray, gamma_db: float, n_gnb: int):
    cm = CoverageMatrix.from_pl(pl, gamma_db, run.weights)
    p = plan_gnb(cm, n_gnb, node_limit=run.cfg["gnb_node_limit"])
    sel = run.cand.points[p.chosen]
    info = {"chosen": p.chosen, "positions": sel, "coverage": p.coverage,
            "covered": int(p.beta.sum()), "service_grids": len(run.sa),
            "outage": len(p.outage), **{k: p.info[k] for k in ("status", "gap", "nodes",
                                                               "objective", "groups",
                                                               "candidates_kept")}}
    return cm, p, info


def _serving_pl(pl: np.ndarray, chosen) -> np.ndarray:
    return pl[chosen].min(axis=0)


def cmd_visibility(run: Run, out: Path) -> dict:
    cfg = run.cfg
    if cfg["source"] is not None:
        src = np.asarray(cfg["source"], float)
        if src.shape != (3,):
            raise ConfigError("source must be x,y,z")
    else:
        k = cfg["candidate"] if cfg["candidate"] is not None else 0
        if not 0 <= k < len(run.cand):
            raise ConfigError(f"candidate index must be in 0..{len(run.cand) - 1}")
        src = run.cand.points[k]
    mode = cfg["mode"]
    v = run.engine.index(src, diffuse=mode == "diffuse")
    write_visibility_csv(out / "coverage.csv", run.sa, v, mode)
    write_pgm(out / "coverage.pgm", visibility_raster(run.scenario, run.sa, v, mode))
    return {"source": src, "mode": mode, "direct": int(v.direct.sum()),
            "specular": int(v.specular.sum()), "diffuse": int(v.diffuse.sum()),
            "service_grids": len(run.sa),
            "pgm_classes": {"blocked": 0, "building": PGM_BUILDING, "indirect": 128,
                            "direct": 255}}


def gamma_sweep(run: Run, modes=MODES, n_gnb: int = 1):
    lo, hi, step = run.cfg["gamma_sweep"]
    gammas = np.arange(lo, hi + 0.5 * step, step, dtype=float)
    rows = []
    for mode in modes:
        pl = run.path_loss(mode)
        for g in gammas:
            cm = CoverageMatrix.from_pl(pl, float(g), run.weights)
            p = plan_gnb(cm, n_gnb, node_limit=run.cfg["gnb_node_limit"])
            rows.append({"mode": mode, "gamma_db": float(g), "coverage": p.coverage,
                         "covered": int(p.beta.sum()), "chosen": p.chosen.tolist(),
                         "status": p.info["status"]})
    return rows


def cmd_plan_gnb(run: Run, out: Path, sweep: bool) -> dict:
    mode = run.cfg["mode"]
    run._need_diffuse = sweep
    pl = run.path_loss(mode)
    cm, p, info = _gnb_section(run, pl, run.gamma_db, run.cfg["n_gnb"])
    serving = _serving_pl(pl, p.chosen)
    _write(out / "coverage.csv", _csv(
        ["index", "x", "y", "z", "path_loss_db", "covered"],
        [[j, _f(x, 3), _f(y, 3), _f(z, 3), _f(serving[j], 6), int(p.beta[j])]
         for j, (x, y, z) in enumerate(run.sa.points)]))
    vals = np.where(p.beta, PGM_GNB, PGM_OUTAGE)
    write_pgm(out / "coverage.pgm", raster(run.scenario, run.sa, vals, PGM_BUILDING))
    rep = {"gnb": info}
    if sweep:
        rows = gamma_sweep(run, MODES, run.cfg["n_gnb"])
        _write(out / "sweep.csv", _csv(
            ["mode", "gamma_db", "covered", "coverage", "status"],
            [[r["mode"], _f(r["gamma_db"], 1), r["covered"], _f(r["coverage"], 9), r["status"]]
             for r in rows]))
        rep["gamma_sweep"] = rows
    return rep


def _pmr_setup(run: Run, sizes):
    """gNB plan, outage set, mounting candidates and gain tensors."""
    pc = run.cfg["pmr"]
    pl = run.path_loss(run.cfg["mode"])
    cm, p, gnb_info = _gnb_section(run, pl, run.gamma_db, run.cfg["n_gnb"])
    outage = run.sa.subset(p.outage, Role.OUTAGE_AREA)
    gnb_pts = run.cand.points[p.chosen]
    mounts = generate_building_surface_grid(run.scenario, pc["candidate_spacing"])
    occ = run.engine.occ
    vgnb = occ.clear_matrix(gnb_pts, mounts.points)
    vosa = occ.clear_matrix(outage.points, mounts.points) if len(outage) else \
        np.zeros((0, len(mounts)), bool)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cands = pmr_candidates(vgnb.any(axis=0), vosa.any(axis=0), mounts,
                               run.scenario.pmr_height_band)
    z = mounts.points[:, 2]
    band = run.scenario.pmr_height_band
    sel = np.flatnonzero(vgnb.any(axis=0) & vosa.any(axis=0) & (z >= band[0]) & (z <= band[1]))
    params = GainParams(facet=pc["facet"], wavelength=run.channel.wavelength, zeta=pc["zeta"],
                        g_gnb_dbi=run.budget.g_gnb_dbi, g_ue_dbi=run.budget.g_ue_dbi,
                        mode=pc["summation"], angles=pc["angles"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FarFieldWarning)
        tensors = build_gain_tensor(gnb_pts, cands, outage, params, vosa[:, sel].T,
                                    vgnb[:, sel], sides=sizes,
                                    orient_stride=pc["orient_stride"]) if len(cands) and \
            len(outage) else {}
    w = None if run.weights is None else run.weights[p.outage]
    if w is not None and w.sum() <= 0:
        w = None
    gamma_lin = gamma_linear(run.gamma_db, run.budget.g_gnb_dbi, run.budget.g_ue_dbi)
    meta = {"gnb": gnb_info, "outage_grids": len(outage), "mount_candidates": len(cands),
            "gamma_lin": gamma_lin, "summation": pc["summation"], "angles": pc["angles"],
            "candidate_spacing": pc["candidate_spacing"], "orient_stride": pc["orient_stride"],
            "triples": {str(s): t.n_triples for s, t in tensors.items()}}
    return p, outage, cands, tensors, w, gamma_lin, meta


def _placement_report(pp, cands, outage, gnb_pts, gamma_lin) -> dict:
    refl = []
    for (i, k, l), n in zip(pp.triples, pp.normals):
        refl.append({"gnb": int(i), "position": cands.points[k], "normal": n,
                     "aimed_grid": outage.points[l], "candidate": int(k)})
    with np.errstate(divide="ignore"):
        rel = 10.0 * np.log10(pp.xi / gamma_lin)
    return {"side_m": pp.side, "n_pmr": len(pp.rows), "reflectors": refl,
            "coverage": pp.coverage, "covered": pp.n_covered, "outage_grids": len(outage),
            "xi_db_rel_max": float(rel.max()) if len(rel) else None,
            **{k: pp.info.get(k) for k in ("status", "gap", "nodes", "mismatches",
                                          "triples_kept", "dominated", "grids_modeled",
                                          "big_m_global", "big_m_upper_max")}}


def _write_pmr_maps(run: Run, out: Path, gnb_plan, outage, pp, gamma_lin):
    with np.errstate(divide="ignore"):
        rel = 10.0 * np.log10(pp.xi / gamma_lin)
    _write(out / "coverage.csv", _csv(
        ["outage_index", "grid_index", "x", "y", "z", "xi_db_rel", "covered"],
        [[o, int(j), _f(x, 3), _f(y, 3), _f(z, 3), _f(rel[o], 6) if math.isfinite(rel[o])
          else "-inf", int(pp.beta[o])]
         for o, (j, (x, y, z)) in enumerate(zip(gnb_plan.outage, outage.points))]))
    vals = np.where(gnb_plan.beta, PGM_GNB, PGM_OUTAGE)
    vals[gnb_plan.outage[pp.beta]] = PGM_PMR
    write_pgm(out / "coverage.pgm", raster(run.scenario, run.sa, vals, PGM_BUILDING))


def _pmr_node_limit(run):
    return run.cfg["pmr"]["node_limit"]


def cmd_plan_pmr(run: Run, out: Path) -> dict:
    pc = run.cfg["pmr"]
    side = float(pc["size"])
    gp, outage, cands, tensors, w, gamma_lin, meta = _pmr_setup(run, (side,))
    n = int(pc["n_pmr"])
    if n == 0 or not tensors:
        from .pmr import _empty_placement
        from .reflector import GainTensor
        empty = GainTensor(np.zeros((0, 3), np.int64), np.zeros((0, 3)), np.zeros(0, np.int64),
                           np.zeros(0, np.int64), np.zeros(0), len(outage), side)
        pp = _empty_placement(PmrProblemSpec(empty, 0, gamma_lin, w)) if len(outage) else None
        if not len(outage):
            log.info("no outage grids; nothing to place")
        elif n and not tensors:
            log.warning("no feasible reflector mounts; placing nothing")
    else:
        spec = PmrProblemSpec(tensors[side], n, gamma_lin, w, strict_c4=pc["strict_c4"])
        pp = plan_pmr(spec, node_limit=_pmr_node_limit(run))
    rep = {"pmr_setup": meta}
    if pp is not None:
        rep["pmr"] = _placement_report(pp, cands, outage, run.cand.points[gp.chosen], gamma_lin)
        _write_pmr_maps(run, out, gp, outage, pp, gamma_lin)
    return rep


def cmd_sweep(run: Run, out: Path) -> dict:
    pc = run.cfg["pmr"]
    sizes = tuple(sorted(float(s) for s in pc["sizes"]))
    lo, hi = pc["n_range"]
    gp, outage, cands, tensors, w, gamma_lin, meta = _pmr_setup(run, sizes)
    if not len(outage):
        raise ConfigError("the gNB plan leaves no outage; nothing to sweep")
    if not tensors:
        raise ConfigError("no reflector can serve the outage set; nothing to sweep")
    rows, placements = sweep_pmr(tensors, range(int(lo), int(hi) + 1), gamma_lin, w,
                                 strict_c4=pc["strict_c4"], node_limit=_pmr_node_limit(run))
    _write(out / "sweep.csv", _csv(
        ["side_m", "n_pmr", "covered", "outage", "coverage", "status"],
        [[_f(r["side"], 1), r["n_pmr"], r["covered"], r["outage"], _f(r["coverage"], 9),
          r["status"]] for r in rows]))
    full = {}
    for s in sizes:
        hit = [r["n_pmr"] for r in rows if r["side"] == s and r["covered"] == r["outage"]]
        full[str(s)] = min(hit) if hit else None
    best = placements[(sizes[0], int(hi))]
    _write_pmr_maps(run, out, gp, outage, best, gamma_lin)
    return {"pmr_setup": meta, "sweep": rows, "full_coverage_at": full,
            "mismatches": sum(p.info.get("mismatches", 0) for p in placements.values()),
            "placements": {f"{s}:{n}": _placement_report(p, cands, outage, None, gamma_lin)
                           for (s, n), p in placements.items()}}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmwplan", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario JSON (default: bundled reference)")
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--gamma-db", type=float, help="maximum allowable path loss in dB")
        p.add_argument("--mode", choices=MODES, help="visibility mode")
        p.add_argument("--n-gnb", type=int, help="number of gNBs to place")
        p.add_argument("--weights", help="CSV of index,weight over service grids")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("visibility", help="visibility classes from one source")
    common(p)
    p.add_argument("--source", help="source point x,y,z")
    p.add_argument("--candidate", type=int, help="gNB candidate index as source")
    p = sub.add_parser("plan-gnb", help="optimal gNB placement")
    common(p)
    p.add_argument("--gamma-sweep", action="store_true",
                   help="also tabulate coverage against the threshold for all modes")
    for name, helptext in (("plan-pmr", "reflector placement for the gNB outage"),
                           ("sweep", "reflector count and size sweep")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--n-pmr", type=int, help="number of reflectors")
        p.add_argument("--pmr-size", type=float, help="plate side in metres")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (FileNotFoundError, ConfigError, json.JSONDecodeError) as e:
        print(f"mmwplan: error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        run = Run(cfg)
        if args.command == "visibility":
            body = cmd_visibility(run, out)
        elif args.command == "plan-gnb":
            body = cmd_plan_gnb(run, out, args.gamma_sweep)
        elif args.command == "plan-pmr":
            body = cmd_plan_pmr(run, out)
        else:
            body = cmd_sweep(run, out)
    except (ScenarioError, ConfigError, FileNotFoundError) as e:
        print(f"mmwplan: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - report and exit nonzero
        log.debug("failure", exc_info=True)
        print(f"mmwplan: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    report = {"command": args.command, "version": __version__, "config": run.resolved(),
              "mapl": mapl_report(run.budget), "gamma_db": run.gamma_db,
              "p_los_model": run.channel.p_los_model, **body}
    _write(out / "report.json", _json(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
