"""Command-line entry point: ``proxtrust {validate,run,trace,sweep}``.

Exit codes: 0 success, 1 usage, 2 config invalid, 3 runtime failure.
``trace`` works from an event log alone, so any run can be re-analysed
without re-simulating.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .config import ConfigError, ConfigInvalid, load_config
from .contacts import ContactIndex, ContactRecord
from .epidemic import (
    CycleDetected,
    EpidemicParams,
    Infection,
    Observations,
    TraceReport,
    TransmissionMode,
    trace_forward_only,
    trace_to_patient_zero,
)
from .events import read_events
from .sim import SWEEP_COLUMNS, run, sweep
from .trust import TrustModelParams, TrustStore

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
OUT_ENV = "PROXTRUST_OUT"
DEFAULT_OUT = "proxtrust-out"
MANIFEST_NAME = "manifest.json"


class UnknownDevice(LookupError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    config_path: str
    config_hash: str
    seed: int
    version: str
    start_tick: int
    end_tick: int
    overrides: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    def write(self, path) -> None:
        # "x" refuses to replace the manifest of an earlier run
        with open(path, "x") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


@dataclass
class LogReplay:
    """Everything tracing needs, rebuilt from an event log."""

    header: dict
    contacts: ContactIndex
    store: TrustStore
    obs: Observations
    ledger: list
    params: EpidemicParams
    trust_params: TrustModelParams
    end_tick: int

    @classmethod
    def from_records(cls, records: list[dict]) -> "LogReplay":
        if not records or records[0].get("type") != "header":
            raise ValueError("event log does not start with a header record")
        header = records[0]
        trust_params = TrustModelParams.from_dict(header["trust_params"])
        params = EpidemicParams(**header["epidemic_params"])
        store = TrustStore(trust_params)
        contacts, onset, confirmed = [], {}, {}
        ledger = [Infection(None, int(d), 0) for d in header.get("initial_infected", [])]
        end = 0
        for r in records:
            end = max(end, r["tick"])
            kind = r["type"]
            if kind == "contact":
                contacts.append(ContactRecord.from_record(r))
            elif kind == "trust_update":
                store.set(r["from"], r["to"], r["score"], r["tick"], r["profile"], r["count"])
            elif kind == "confirmed":
                onset[r["device"]] = r["onset"]
                confirmed[r["device"]] = r["tick"]
            elif kind == "infection":
                ledger.append(Infection(r["infector"], r["infectee"], r["tick"]))
        obs = Observations(onset=onset, confirmed=confirmed, adopters=frozenset(header.get("adopters", [])))
        return cls(header, ContactIndex(contacts), store, obs, ledger, params, trust_params, end)

    @classmethod
    def from_file(cls, path) -> "LogReplay":
        with open(path) as fh:
            return cls.from_records(read_events(fh))

    def default_index(self) -> int:
        """Latest-onset adopting confirmed case; smaller id on ties."""
        cases = [(self.obs.onset[d], d) for d in self.obs.confirmed if d in self.obs.adopters]
        if not cases:
            raise UnknownDevice("log holds no adopting confirmed case")
        latest = max(t for t, _ in cases)
        return min(d for t, d in cases if t == latest)

    def trace(self, index: Optional[int] = None, mode: Optional[str] = None, forward_only: bool = False) -> TraceReport:
        if index is None:
            index = self.default_index()
        if index not in self.header.get("population", []):
            raise UnknownDevice(f"device {index} is not in the logged population")
        if index not in self.obs.confirmed:
            raise UnknownDevice(f"device {index} is not a confirmed case in the log")
        params = self.params if mode is None else replace(self.params, mode=TransmissionMode(mode))
        if forward_only:
            return trace_forward_only(self.contacts, self.obs, index, params, self.store, self.ledger, self.trust_params)
        try:
            return trace_to_patient_zero(self.contacts, self.obs, index, params, self.store, self.ledger, self.trust_params)
        except CycleDetected as e:
            return e.report


def _add_config(p, required=True):
    p.add_argument("--config", required=required, help="scenario JSON file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, e.g. epidemic.beta=0.5 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxtrust", description="Proximity trust mesh simulator and tracing tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a scenario file")
    _add_config(p)

    p = sub.add_parser("run", help="run a scenario and write its artifacts")
    _add_config(p)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    p = sub.add_parser("trace", help="trace an index case from an event log")
    p.add_argument("--log", required=True, help="events.jsonl, or a run directory holding one")
    p.add_argument("--index", type=int, help="index case (default: latest adopting case)")
    p.add_argument("--mode", choices=[m.value for m in TransmissionMode], help="contact-weight mode")
    p.add_argument("--forward-only", action="store_true", help="skip backward tracing")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("sweep", help="one run per parameter value")
    _add_config(p)
    p.add_argument("--param", required=True, help="dotted path, e.g. epidemic.adoption_rate")
    p.add_argument("--values", nargs="*", default=[], help="values (JSON), space or comma separated")
    p.add_argument("--seeds", type=int, default=1, help="runs per value")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", help="CSV path (default stdout)")
    return parser


def _parse_values(items: list[str]) -> list:
    out = []
    for item in items:
        for tok in item.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                out.append(json.loads(tok))
            except json.JSONDecodeError:
                out.append(tok)
    return out


def _config_problem(e: Exception) -> int:
    if isinstance(e, ConfigInvalid):
        for path, msg in e.problems:
            print(f"{path} {msg}", file=sys.stderr)
    else:
        print(str(e), file=sys.stderr)
    return EXIT_INVALID


def cmd_validate(args) -> int:
    try:
        load_config(args.config, args.overrides)
    except FileNotFoundError:
        print(f"{args.config}: file not found", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as e:
        return _config_problem(e)
    print("OK")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.overrides)
    except FileNotFoundError:
        print(f"{args.config}: file not found", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as e:
        return _config_problem(e)
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    manifest_path = out / MANIFEST_NAME
    try:
        if manifest_path.exists():
            print(f"{out} already holds a run; choose another --out", file=sys.stderr)
            return EXIT_RUNTIME
        out.mkdir(parents=True, exist_ok=True)
        report = run(cfg)
        paths = report.write_outputs(out)
        RunManifest(
            config_path=str(Path(args.config)),
            config_hash=cfg.source_hash,
            seed=cfg.seed,
            version=__version__,
            start_tick=0,
            end_tick=cfg.ticks_total,
            overrides=list(args.overrides),
            outputs={k: p.name for k, p in paths.items()},
        ).write(manifest_path)
    except OSError as e:
        print(f"cannot write outputs: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(manifest_path)
    return EXIT_OK


def cmd_trace(args) -> int:
    log = Path(args.log)
    if log.is_dir():
        log = log / "events.jsonl"
    try:
        replay = LogReplay.from_file(log)
        report = replay.trace(args.index, args.mode, args.forward_only)
    except UnknownDevice as e:
        print(f"UnknownDevice: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as e:
        print(f"cannot trace {log}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    text = json.dumps(report.to_json(include_backward=not args.forward_only), indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    if not values:
        print("sweep: --values needs at least one value", file=sys.stderr)
        return EXIT_USAGE
    if args.seeds < 1 or args.jobs < 1:
        print("sweep: --seeds and --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.overrides)
    except FileNotFoundError:
        print(f"{args.config}: file not found", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as e:
        return _config_problem(e)
    try:
        rows = sweep(cfg.data, args.param, values, args.seeds, cfg.base_dir, args.jobs)
    except ConfigError as e:
        return _config_problem(e)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "trace": cmd_trace, "sweep": cmd_sweep}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as e:  # anything unexpected is a runtime failure, not a traceback
        print(f"{args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
