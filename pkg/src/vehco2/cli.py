"""``vehco2`` command line: ingest -> train -> validate -> counterfact -> report.

Exit codes: 0 ok, 1 usage/config error, 2 ingest, 3 train, 4 validate,
5 counterfact.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import pipeline, report
from .config import ConfigError, RunConfig
from .dataset import read_manifest, split_by_trip, write_manifest
from .ingest import get_profile, ingest
from .nn import TrainingDiverged
from .nn.checkpoint import CheckpointError
from .pipeline import Role, SequenceModel
from .schema import Domain, SchemaError, read_trips, write_trips
from .synthetic import SyntheticWorld

log = logging.getLogger("vehco2")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_TRAIN, EXIT_VALIDATE, EXIT_COUNTERFACT = 0, 1, 2, 3, 4, 5


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the ingest code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- run directory helpers --------------------------------------------------

def _dirs(cfg: RunConfig) -> dict[str, Path]:
    root = cfg.run_dir
    out = {name: root / name for name in ("harmonized", "checkpoints", "splits", "reports", "loss_curves")}
    for p in out.values():
        p.mkdir(parents=True, exist_ok=True)
    return out


def _lock(cfg: RunConfig) -> FileLock:
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    return FileLock(str(cfg.run_dir / ".lock"))


def model_name(domain: Domain, role: Role, vehicle: str) -> str:
    return f"{domain.value.lower()}-{role.value}-{vehicle}"


def _load_vehicle(cfg: RunConfig, vehicle: str, code: int) -> list:
    path = _dirs(cfg)["harmonized"] / f"{vehicle}.csv"
    if not path.exists():
        raise CommandError(code, f"no harmonized data for {vehicle!r} at {path}; run `ingest` first")
    return read_trips(path)


def _splits(cfg: RunConfig, vehicle: str, trips) -> dict[str, list[str]]:
    """Reuse the vehicle's split manifest if present so f and g share held-out trips."""
    path = _dirs(cfg)["splits"] / f"{vehicle}.csv"
    if path.exists():
        return read_manifest(path)
    manifest = cfg.get("split.manifest")
    if manifest:
        splits = read_manifest(manifest)
    else:
        splits = split_by_trip([t.trip_id for t in trips], cfg.split_spec())
    write_manifest(path, splits, cfg.provenance())
    return splits


def _select(trips, ids) -> list:
    wanted = set(ids)
    return [t for t in trips if t.trip_id in wanted]


def _ckpt_path(cfg: RunConfig, domain: Domain, role: Role, vehicle: str) -> Path:
    return _dirs(cfg)["checkpoints"] / f"{model_name(domain, role, vehicle)}.ckpt"


def _load_model(cfg: RunConfig, domain: Domain, role: Role, vehicle: str, code: int) -> SequenceModel:
    path = _ckpt_path(cfg, domain, role, vehicle)
    if not path.exists():
        raise CommandError(code, f"missing checkpoint {path}; run `train --domain "
                                 f"{domain.value.lower()} --role {role.value}` first")
    try:
        return SequenceModel.load(path)
    except (CheckpointError, KeyError, ValueError) as exc:
        raise CommandError(code, f"cannot read checkpoint {path}: {exc}") from exc


# -- commands ---------------------------------------------------------------

def cmd_ingest(cfg: RunConfig, profile_name: str, raw: str | None) -> int:
    overrides = {}
    if profile_name == "i3":
        overrides["current_sign"] = cfg.get_float("ingest.i3.current_sign")
    if profile_name == "pacifica":
        overrides["co2_density"] = cfg.get_float("ingest.pacifica.co2_density")
        overrides["co2_dilution"] = cfg.get_float("ingest.pacifica.co2_dilution")
    try:
        profile = get_profile(profile_name, **overrides)
    except SchemaError as exc:
        raise CommandError(EXIT_INGEST, str(exc)) from exc
    raw = raw or cfg.get(f"raw.{profile_name}")
    if not raw or not Path(raw).exists():
        raise CommandError(EXIT_INGEST, f"raw data path for {profile_name!r} not found: {raw!r}")
    dirs = _dirs(cfg)
    try:
        trips, rep = ingest(raw, profile, cfg.factors())
    except SchemaError as exc:
        raise CommandError(EXIT_INGEST, str(exc)) from exc
    head = cfg.provenance() | {"profile": profile.name}
    rep_path = dirs["reports"] / f"filter_{profile.name}_{cfg.hash}.txt"
    rep_path.write_text(rep.to_text(head), encoding="utf-8")
    if trips:
        write_trips(dirs["harmonized"] / f"{profile.vehicle}.csv", trips, head)
    print(f"{profile.name}: {len(trips)} trips, {rep.rows_out}/{rep.rows_in} rows kept; report {rep_path}")
    if rep.rejected_files:
        for name, why in sorted(rep.rejected_files.items()):
            print(f"rejected {name}: {why}", file=sys.stderr)
        return EXIT_INGEST
    if not trips:
        print("no trips survived ingestion", file=sys.stderr)
        return EXIT_INGEST
    return EXIT_OK


def _write_loss_curve(path: Path, model: SequenceModel, head: dict) -> None:
    lines = [f"# {k}={v}" for k, v in head.items()]
    lines.append("epoch,train_mse,val_mse")
    lines += [f"{r.epoch},{r.train_mse!r},{r.val_mse!r}" for r in model.history]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(cfg: RunConfig, domain: Domain, role: Role, vehicle: str | None) -> int:
    if domain is Domain.ICEV and role is Role.FEATURE and not cfg.get_bool("pipeline.enable_icev_feature"):
        raise CommandError(EXIT_TRAIN, "the ICEV feature model is disabled; set "
                                       "pipeline.enable_icev_feature = true to train it")
    vehicle = vehicle or cfg.get("ev_vehicle" if domain is Domain.EV else "icev_vehicle")
    trips = _load_vehicle(cfg, vehicle, EXIT_TRAIN)
    if trips[0].domain is not domain:
        raise CommandError(EXIT_TRAIN, f"{vehicle!r} holds {trips[0].domain.value} trips, not {domain.value}")
    try:
        splits = _splits(cfg, vehicle, trips)
        model = pipeline.train_model(
            role, domain, _select(trips, splits["train"]), _select(trips, splits["val"]),
            model_cfg=cfg.model_config(domain, role), train_cfg=cfg.train_config(domain), seed=cfg.seed)
    except TrainingDiverged as exc:
        raise CommandError(EXIT_TRAIN, str(exc)) from exc
    except (ValueError, SchemaError) as exc:
        raise CommandError(EXIT_TRAIN, str(exc)) from exc
    name = model_name(domain, role, vehicle)
    head = cfg.provenance() | {"model": name}
    dirs = _dirs(cfg)
    with _lock(cfg):
        model.save(dirs["checkpoints"] / f"{name}.ckpt", {"config_hash": cfg.hash})
        _write_loss_curve(dirs["loss_curves"] / f"{name}.csv", model, head)
    msg = f"{name}: {len(model.history)} epochs"
    if model.metrics:
        msg += ", val MAE " + ", ".join(f"{t}={m:.4g}" for t, m in zip(model.metrics["targets"], model.metrics["val_mae"]))
    print(msg)
    return EXIT_OK


def cmd_validate(cfg: RunConfig, vehicle: str | None) -> int:
    vehicle = vehicle or cfg.get("ev_vehicle")
    f_model = _load_model(cfg, Domain.EV, Role.FEATURE, vehicle, EXIT_VALIDATE)
    g_model = _load_model(cfg, Domain.EV, Role.EMISSIONS, vehicle, EXIT_VALIDATE)
    trips = _load_vehicle(cfg, vehicle, EXIT_VALIDATE)
    path = _dirs(cfg)["splits"] / f"{vehicle}.csv"
    if not path.exists():
        raise CommandError(EXIT_VALIDATE, f"no split manifest at {path}")
    held_out = _select(trips, read_manifest(path)["test"])
    try:
        rep = pipeline.proxy_validate(f_model, g_model, held_out)
    except (ValueError, SchemaError) as exc:
        raise CommandError(EXIT_VALIDATE, str(exc)) from exc
    if not rep.rows:
        raise CommandError(EXIT_VALIDATE, "no held-out trip is long enough for proxy validation")
    write_proxy_report(cfg, rep)
    return EXIT_OK


def write_proxy_report(cfg: RunConfig, rep: pipeline.ProxyReport) -> tuple[Path, Path]:
    dirs = _dirs(cfg)
    aggs = rep.aggregates()
    rows = rep.table_rows()
    for stat in ("mean", "median"):
        rows.append([stat] + [getattr(aggs[c], stat) for c in ("direct_mae", "proxy_mae", "torque_mae", "throttle_mae")])
    head = cfg.provenance()
    table = report.emit_table(dirs["reports"] / f"proxy_{cfg.hash}.csv", rows, report.PROXY_SCHEMA, head)
    lines = [f"# {k}={v}" for k, v in head.items()]
    for col, st in aggs.items():
        for field_name, value in st.as_dict().items():
            lines.append(f"{col}.{field_name} = {value!r}")
    lines.append(f"trips = {len(rep.rows)}")
    lines.append(f"proxy_not_worse = {rep.n_proxy_not_worse()}")
    lines.append(f"skipped = {','.join(rep.skipped)}")
    summary = dirs["reports"] / f"proxy_summary_{cfg.hash}.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"proxy validation on {len(rep.rows)} trips: median direct {aggs['direct_mae'].median:.4f} g/s, "
          f"proxy {aggs['proxy_mae'].median:.4f} g/s; {table}")
    return table, summary


def cmd_counterfact(cfg: RunConfig, trip_id: str, vehicle: str | None) -> int:
    vehicle = vehicle or cfg.get("icev_vehicle")
    trips = _load_vehicle(cfg, vehicle, EXIT_COUNTERFACT)
    match = [t for t in trips if t.trip_id == trip_id]
    if not match:
        raise CommandError(EXIT_COUNTERFACT, f"unknown trip {trip_id!r} for {vehicle!r}")
    ev = cfg.get("ev_vehicle")
    f_model = _load_model(cfg, Domain.EV, Role.FEATURE, ev, EXIT_COUNTERFACT)
    g_model = _load_model(cfg, Domain.EV, Role.EMISSIONS, ev, EXIT_COUNTERFACT)
    try:
        res = pipeline.counterfactual(match[0], f_model, g_model)
    except (ValueError, SchemaError) as exc:
        raise CommandError(EXIT_COUNTERFACT, str(exc)) from exc
    write_counterfactual(cfg, vehicle, res)
    return EXIT_OK


def write_counterfactual(cfg: RunConfig, vehicle: str, res: pipeline.CounterfactualResult) -> dict[str, Path]:
    dirs = _dirs(cfg)
    stem = f"counterfactual_{vehicle}_{res.trip_id}_{cfg.hash}"
    head = cfg.provenance() | {"trip": res.trip_id, "vehicle": vehicle}
    cols = ["time", "velocity", "torque_ev", "throttle_ev", "co2_ev", "co2_icev", "gap"]
    data = np.column_stack([res.time, res.velocity, res.actuation_ev, res.emissions_ev,
                            res.emissions_icev, res.gap])
    lines = [f"# {k}={v}" for k, v in head.items()] + [",".join(cols)]
    lines += [",".join(repr(float(x)) for x in row) for row in data]
    series = dirs["reports"] / f"{stem}.csv"
    series.write_text("\n".join(lines) + "\n", encoding="utf-8")

    totals = res.totals()
    stats = res.gap_stats()
    tl = [f"# {k}={v}" for k, v in head.items()]
    tl += [f"{k} = {v!r}" for k, v in totals.items()]
    tl += [f"gap.{k} = {v!r}" for k, v in stats.as_dict().items()]
    totals_path = dirs["reports"] / f"{stem}_totals.txt"
    totals_path.write_text("\n".join(tl) + "\n", encoding="utf-8")

    plot = report.emit_plot_series(dirs["reports"] / f"{stem}_plot.csv", res.time, header=head,
                                   ev_counterfactual=res.emissions_ev, icev_observed=res.emissions_icev,
                                   gap=res.gap)
    print(f"trip {res.trip_id}: EV {totals['ev_total_g']:.2f} g vs ICEV {totals['icev_total_g']:.2f} g "
          f"(gap {totals['gap_total_g']:.2f} g over {totals['duration_s']:.0f} s); {series}")
    return {"series": series, "totals": totals_path, "plot": plot}


def cmd_report(cfg: RunConfig, table: str | None, column: str | None) -> int:
    dirs = _dirs(cfg)
    head = cfg.provenance()
    if table:
        header, rows = report.read_table(table)
        j = _column_index(header, column)
        values = [float(r[j]) for r in rows if r[0] not in ("mean", "median") and r[j].strip()]
        st = report.aggregate(values)
        print("\n".join(f"{k} = {v!r}" for k, v in st.as_dict().items()))
        return EXIT_OK

    icev_values = []
    written = []
    for ckpt in sorted(dirs["checkpoints"].glob("*.ckpt")):
        model = SequenceModel.load(ckpt)
        name = ckpt.stem
        if model.history:
            written.append(report.emit_plot_series(
                dirs["reports"] / f"loss_{name}_{cfg.hash}_plot.csv", [r.epoch for r in model.history],
                x_name="epoch", header=head | {"model": name},
                train=[r.train_mse for r in model.history], val=[r.val_mse for r in model.history]))
        if model.role is not Role.EMISSIONS:
            continue
        trips = _load_vehicle(cfg, model.vehicle, EXIT_USAGE)
        split_path = dirs["splits"] / f"{model.vehicle}.csv"
        test = _select(trips, read_manifest(split_path)["test"]) if split_path.exists() else trips
        rows = []
        for trip in test:
            ends, pred = model.predict_trip(trip)
            if len(ends):
                rows.append([trip.trip_id, pipeline.mae(pred[:, 0], trip.channel("co2_rate")[ends])])
        if not rows:
            continue
        values = [r[1] for r in rows]
        if model.domain is Domain.ICEV:
            icev_values += values
        written.append(report.emit_table(dirs["reports"] / f"trip_mae_{name}_{cfg.hash}.csv",
                                         rows, report.TRIP_MAE_SCHEMA, head | {"model": name}))
        stats_path = dirs["reports"] / f"trip_mae_{name}_stats_{cfg.hash}.txt"
        _write_stats(stats_path, report.aggregate(values), head)
        written.append(stats_path)
    if icev_values:
        agg_path = dirs["reports"] / f"icev_aggregate_{cfg.hash}.txt"
        _write_stats(agg_path, report.aggregate(icev_values), head)
        written.append(agg_path)
    for path in written:
        print(path)
    return EXIT_OK


def _column_index(header: list[str], column: str | None) -> int:
    """Column by exact name, case-insensitive prefix or 0-based index; default the second."""
    if column is None:
        return 1
    if column in header:
        return header.index(column)
    if column.isdigit() and int(column) < len(header):
        return int(column)
    hits = [j for j, h in enumerate(header) if h.lower().startswith(column.lower().replace("_", " "))]
    if len(hits) != 1:
        raise CommandError(EXIT_USAGE, f"column {column!r} does not select one of {header}")
    return hits[0]


def _write_stats(path: Path, stats: report.AggregateStats, head: dict) -> None:
    lines = [f"# {k}={v}" for k, v in head.items()]
    lines += [f"{k} = {v!r}" for k, v in stats.as_dict().items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_synth(out: str, seed: int, n_ev: int, n_icev: int, samples: int) -> int:
    world = SyntheticWorld(seed=seed)
    world.write_i3_raw(Path(out) / "i3", n_ev, samples)
    world.write_qx50_raw(Path(out) / "qx50", n_icev, samples)
    print(f"wrote {n_ev} i3-format and {n_icev} dyno-format files under {out}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def _kv(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vehco2", description=__doc__.splitlines()[0])
    p.add_argument("-c", "--config", help="run configuration file (key = value lines)")
    p.add_argument("--set", dest="overrides", action="append", type=_kv, default=[],
                   metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="harmonize raw source files of one vehicle")
    s.add_argument("--profile", required=True, choices=["i3", "blazer", "pacifica", "qx50", "qx50-strict"])
    s.add_argument("--raw", help="raw file or directory (default: config raw.<profile>)")

    s = sub.add_parser("train", help="train one feature or emissions model")
    s.add_argument("--domain", required=True, type=str.lower, choices=["ev", "icev"])
    s.add_argument("--role", required=True, type=str.lower, choices=["emissions", "feature"])
    s.add_argument("--vehicle")

    s = sub.add_parser("validate", help="proxy validation on held-out EV trips")
    s.add_argument("--vehicle")

    s = sub.add_parser("counterfact", help="EV counterfactual stream for one ICEV trip")
    s.add_argument("--trip", required=True)
    s.add_argument("--vehicle")

    s = sub.add_parser("report", help="per-trip test MAE tables and aggregates")
    s.add_argument("--table", help="aggregate one column of an existing table instead")
    s.add_argument("--column")

    s = sub.add_parser("synth", help="write synthetic raw files for a dry run")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ev-trips", type=int, default=12)
    s.add_argument("--icev-trips", type=int, default=3)
    s.add_argument("--samples", type=int, default=400)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth":
        return cmd_synth(args.out, args.seed, args.ev_trips, args.icev_trips, args.samples)
    try:
        cfg = RunConfig.load(args.config, dict(args.overrides))
        if args.command == "ingest":
            return cmd_ingest(cfg, args.profile, args.raw)
        if args.command == "train":
            return cmd_train(cfg, Domain.parse(args.domain), Role(args.role), args.vehicle)
        if args.command == "validate":
            return cmd_validate(cfg, args.vehicle)
        if args.command == "counterfact":
            return cmd_counterfact(cfg, args.trip, args.vehicle)
        if args.command == "report":
            return cmd_report(cfg, args.table, args.column)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
