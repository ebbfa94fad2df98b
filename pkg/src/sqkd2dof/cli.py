"""Command-line interface.

Subcommands:

* ``run``       — execute one full session and report the outcome
* ``detect``    — Monte Carlo detection rates side by side with the exact oracle
* ``theorem1``  — exact probe-independence check of an entangle-measure attack
* ``capacity``  — raw-key throughput of the dual-degree protocol vs the baseline
* ``baseline``  — run the single-degree-of-freedom reference session

Configuration is one JSON document with top-level keys ``session`` and
``attack``.  Exit codes: 0 success, 1 usage/config error, 2 protocol abort.
Reports are byte-deterministic for identical (config, seed, trials), whatever
``--threads`` says.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

from . import analysis, baseline, protocol, reports
from .attacks import (
    AttackModel,
    EntangleMeasure,
    FixedBasis,
    FixedState,
    InterceptResend,
    KET_ORDER,
    MeasureResend,
    NoAttack,
    RandomPerRound,
    UniformOverFour,
    controlled_orthogonal_attack,
    identity_attack,
    probe_independence_check,
    sample_no_error_attack,
)
from .oracle import UnsupportedAttackError, exact_detection
from .protocol import SessionConfig, run_session
from .rng import RandomSource
from .states import PhotonState, basis_from_name, ket

SCHEMA_VERSION = "1"

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "session": {
            "type": "object",
            "properties": {
                "L": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "tau_ctrl": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "tau_sift": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "attack": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {
                    "enum": [
                        "none",
                        "intercept-resend",
                        "measure-resend",
                        "entangle-measure",
                        "qubit-intercept-resend",
                        "qubit-measure-resend",
                    ]
                }
            },
        },
        "trials": {"type": "integer", "minimum": 100},
    },
    "additionalProperties": False,
}


class ConfigError(Exception):
    """Bad usage or configuration; maps to exit code 1."""


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise ConfigError(f"{path}: {where}: {exc.message}") from exc
    return doc


def resolve_seed(args, doc: dict) -> int:
    if args.seed is not None:
        return args.seed
    session = doc.get("session", {})
    if "seed" in session:
        return int(session["seed"])
    env = os.environ.get("SQKD_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SQKD_SEED is not an integer: {env!r}") from exc
    return 0


def session_from_config(doc: dict, seed: int) -> SessionConfig:
    session = dict(doc.get("session", {}))
    session["seed"] = seed
    try:
        return SessionConfig(
            L=session.get("L", 64),
            delta=session.get("delta", 0.25),
            tau_ctrl=session.get("tau_ctrl", 0.0),
            tau_sift=session.get("tau_sift", 0.0),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid session config: {exc}") from exc


def _parse_complex_pair(value, where: str) -> complex:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{where}: complex values are [re, im] pairs, got {value!r}")
    re, im = value
    if not isinstance(re, (int, float)) or not isinstance(im, (int, float)):
        raise ConfigError(f"{where}: complex parts must be numbers, got {value!r}")
    return complex(re, im)


def parse_complex_vector(values, where: str) -> np.ndarray:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}: expected a non-empty list of [re, im] pairs")
    return np.array([_parse_complex_pair(v, where) for v in values], dtype=np.complex128)


def parse_complex_matrix(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise ConfigError(f"{where}: expected a non-empty list of rows")
    return np.stack([parse_complex_vector(row, f"{where}[{i}]") for i, row in enumerate(rows)])


def _parse_fake(value) -> FixedState | RandomPerRound:
    if isinstance(value, str):
        try:
            return FixedState(ket(value))
        except ValueError as exc:
            raise ConfigError(f"attack.fake: {exc}") from exc
    if isinstance(value, list):
        vec = parse_complex_vector(value, "attack.fake")
        try:
            return FixedState(PhotonState(vec))
        except ValueError as exc:
            raise ConfigError(f"attack.fake: {exc}") from exc
    if isinstance(value, dict) and "random" in value:
        spec = value["random"]
        if spec == "uniform":
            return RandomPerRound.uniform()
        if isinstance(spec, dict):
            weights = [0.0] * 16
            for lbl, w in spec.items():
                if lbl not in KET_ORDER:
                    raise ConfigError(f"attack.fake.random: unknown ket label {lbl!r}")
                weights[KET_ORDER.index(lbl)] = w
            try:
                return RandomPerRound(tuple(weights))
            except ValueError as exc:
                raise ConfigError(f"attack.fake.random: {exc}") from exc
        raise ConfigError(f"attack.fake.random must be 'uniform' or a label->weight map, got {spec!r}")
    raise ConfigError(f"attack.fake must be a ket label, amplitude list or random spec, got {value!r}")


def _parse_entangle_measure(attack: dict, seed: int) -> EntangleMeasure:
    preset = attack.get("preset")
    if preset is not None:
        d = attack.get("probe_dim", 4)
        if not isinstance(d, int) or d < 1:
            raise ConfigError(f"attack.probe_dim must be a positive integer, got {d!r}")
        if preset == "identity":
            return identity_attack(d)
        if preset == "probe-only-random":
            return sample_no_error_attack(d, RandomSource(attack.get("preset_seed", seed)))
        if preset == "controlled-orthogonal":
            if d != 4:
                raise ConfigError("the controlled-orthogonal preset is defined for probe_dim=4")
            return controlled_orthogonal_attack()
        raise ConfigError(f"unknown entangle-measure preset {preset!r}")
    missing = [k for k in ("probe_init", "forward_unitary", "backward_unitary") if k not in attack]
    if missing:
        raise ConfigError(f"entangle-measure attack needs keys {missing} (or a preset)")
    eps = parse_complex_vector(attack["probe_init"], "attack.probe_init")
    fwd = parse_complex_matrix(attack["forward_unitary"], "attack.forward_unitary")
    bwd = parse_complex_matrix(attack["backward_unitary"], "attack.backward_unitary")
    try:
        return EntangleMeasure(eps.size, eps, fwd, bwd)
    except ValueError as exc:
        raise ConfigError(f"invalid entangle-measure attack: {exc}") from exc


def attack_from_config(doc: dict, seed: int) -> AttackModel:
    attack = doc.get("attack", {"type": "none"})
    kind = attack.get("type", "none")
    if kind == "none":
        return NoAttack()
    if kind == "intercept-resend":
        if "fake" not in attack:
            raise ConfigError("intercept-resend attack needs a 'fake' key")
        backward = attack.get("backward", "passthrough")
        try:
            return InterceptResend(_parse_fake(attack["fake"]), backward)
        except ValueError as exc:
            raise ConfigError(f"invalid intercept-resend attack: {exc}") from exc
    if kind == "measure-resend":
        basis = attack.get("basis", "uniform")
        if basis == "uniform":
            return MeasureResend(UniformOverFour())
        try:
            return MeasureResend(FixedBasis(basis_from_name(basis)))
        except ValueError as exc:
            raise ConfigError(f"invalid measure-resend attack: {exc}") from exc
    if kind == "entangle-measure":
        return _parse_entangle_measure(attack, seed)
    raise ConfigError(f"attack type {kind!r} is not valid for this command")


def baseline_attack_from_config(doc: dict) -> baseline.BaselineAttack:
    attack = doc.get("attack", {"type": "none"})
    kind = attack.get("type", "none")
    if kind == "none":
        return NoAttack()
    if kind == "qubit-intercept-resend":
        if "fake" not in attack:
            raise ConfigError("qubit-intercept-resend attack needs a 'fake' key")
        vec = parse_complex_vector(attack["fake"], "attack.fake")
        try:
            return baseline.QubitInterceptResend(vec)
        except ValueError as exc:
            raise ConfigError(f"invalid qubit attack: {exc}") from exc
    if kind == "qubit-measure-resend":
        try:
            return baseline.QubitMeasureResend(attack.get("basis", "uniform"))
        except ValueError as exc:
            raise ConfigError(f"invalid qubit attack: {exc}") from exc
    raise ConfigError(f"attack type {kind!r} is not a single-qubit analog")


def _echo_config(doc: dict, session: SessionConfig | None) -> dict:
    echo = {"attack": doc.get("attack", {"type": "none"})}
    if session is not None:
        echo["session"] = {
            "L": session.L,
            "delta": session.delta,
            "tau_ctrl": session.tau_ctrl,
            "tau_sift": session.tau_sift,
            "seed": session.seed,
        }
    return echo


def _report_skeleton(command: str, seed: int, config_echo: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "seed": seed, "config": config_echo}


def _emit(args, text: str) -> None:
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------


def cmd_run(args) -> int:
    doc = load_config(args.config)
    seed = resolve_seed(args, doc)
    session = session_from_config(doc, seed)
    attack = attack_from_config(doc, seed)
    result = run_session(session, attack)

    payload = {
        "status": result.status.value,
        "ctrl_error_rate": result.ctrl_error_rate,
        "sift_error_rate": result.sift_error_rate,
        "sift_check_histogram": result.sift_check_histogram,
        "alice_key": None if result.alice_key is None else result.alice_key.as_str(),
        "bob_key": None if result.bob_key is None else result.bob_key.as_str(),
        "key_length": None if result.alice_key is None else len(result.alice_key),
        "n_rounds": session.n_rounds,
        "attack": result.attack_label,
    }
    if args.output == "json":
        report = _report_skeleton("run", seed, _echo_config(doc, session))
        report["result"] = payload
        report["transcript"] = protocol.transcript_rows(result)
        _emit(args, reports.canonical_json(report))
    elif args.output == "csv":
        _emit(args, protocol.transcript_to_csv(result))
    else:
        rows = [(k, v if v is not None else "-") for k, v in payload.items()]
        _emit(args, reports.render_table(rows, title=f"session ({session.n_rounds} rounds, seed {seed})"))
    return 0 if result.completed else 2


def cmd_detect(args) -> int:
    doc = load_config(args.config)
    seed = resolve_seed(args, doc)
    attack = attack_from_config(doc, seed)
    trials = args.trials if args.trials is not None else doc.get("trials", 100000)
    if trials < 100:
        raise ConfigError(f"need at least 100 trials, got {trials}")
    stats = analysis.estimate_detection(attack, trials, seed, threads=args.threads)
    try:
        exact = exact_detection(attack).as_floats()
        supported = True
    except UnsupportedAttackError:
        exact = None
        supported = False

    payload = {
        "trials": trials,
        "stats": stats.to_dict(),
        "exact_supported": supported,
        "exact": exact,
        "difference": None
        if exact is None
        else {
            "ctrl_detection": stats.ctrl_detection_rate - exact["ctrl_detection"],
            "sift_mismatch": stats.sift_mismatch_rate - exact["sift_mismatch"],
        },
    }
    if args.output == "json":
        report = _report_skeleton("detect", seed, _echo_config(doc, None))
        report.update(payload)
        _emit(args, reports.canonical_json(report))
    elif args.output == "csv":
        row = reports.flatten("", reports.jsonable(payload))
        if not supported:
            row["exact"] = "unsupported"
        _emit(args, reports.render_csv(sorted(row), [row]))
    else:
        rows = [
            ("attack", stats.attack),
            ("trials", trials),
            ("ctrl_detection_rate", stats.ctrl_detection_rate),
            ("ctrl_detection_ci", list(stats.ctrl_detection_ci)),
            ("exact_ctrl_detection", exact["ctrl_detection"] if supported else "unsupported"),
            ("sift_mismatch_rate", stats.sift_mismatch_rate),
            ("sift_mismatch_ci", list(stats.sift_mismatch_ci)),
            ("exact_sift_mismatch", exact["sift_mismatch"] if supported else "unsupported"),
            ("sift_tv_distance", stats.sift_tv_distance),
            ("exact_sift_tv_distance", exact["sift_tv_distance"] if supported else "unsupported"),
            ("abort_fraction", stats.abort_fraction),
        ]
        _emit(args, reports.render_table(rows, title="detection estimate vs exact oracle"))
    return 0


def cmd_theorem1(args) -> int:
    doc = load_config(args.config)
    seed = resolve_seed(args, doc)
    try:
        attack = attack_from_config(doc, seed)
    except ConfigError:
        raise
    if not isinstance(attack, EntangleMeasure):
        raise ConfigError("theorem1 requires an entangle-measure attack in the config")
    report = probe_independence_check(attack)

    payload = {
        "attack": attack.describe(),
        "probe_dim": attack.probe_dim,
        "error_ctrl": report.error_ctrl,
        "error_sift": report.error_sift,
        "branch_probabilities": list(report.branch_probabilities),
        "max_pairwise_trace_distance": report.max_pairwise_trace_distance,
        "pairwise_trace_distances": report.pairwise_distance_matrix(),
        "probe_conditionals": [None if z is None else z for z in report.probe_conditionals],
        "common_probe": report.common_probe,
        "implication": report.implication_verdict(),
    }
    if args.output == "json":
        out = _report_skeleton("theorem1", seed, _echo_config(doc, None))
        out["report"] = payload
        _emit(args, reports.canonical_json(out))
    elif args.output == "csv":
        row = reports.flatten("", reports.jsonable({k: v for k, v in payload.items() if k != "probe_conditionals"}))
        _emit(args, reports.render_csv(sorted(row), [row]))
    else:
        rows = [
            ("attack", payload["attack"]),
            ("error_ctrl", payload["error_ctrl"]),
            ("error_sift", payload["error_sift"]),
            ("max_pairwise_trace_distance", payload["max_pairwise_trace_distance"]),
            ("implication(no error => independent probe)", payload["implication"]),
        ]
        for i, row_vals in enumerate(payload["pairwise_trace_distances"]):
            rows.append((f"distances[{i}]", ["-" if v is None else v for v in row_vals]))
        _emit(args, reports.render_table(rows, title="probe-independence check"))
    return 0


def cmd_capacity(args) -> int:
    doc = load_config(args.config)
    seed = resolve_seed(args, doc)
    session = session_from_config(doc, seed)
    try:
        cap = analysis.capacity_compare(session)
    except analysis.SessionAbortError as exc:
        sys.stderr.write(f"capacity comparison failed: {exc}\n")
        return 2
    payload = cap.to_dict()
    if args.output == "json":
        report = _report_skeleton("capacity", seed, _echo_config(doc, session))
        report["report"] = payload
        _emit(args, reports.canonical_json(report))
    elif args.output == "csv":
        _emit(args, reports.render_csv(sorted(payload), [payload]))
    else:
        _emit(args, reports.render_table(sorted(payload.items()), title="raw-key capacity comparison"))
    return 0


def cmd_baseline(args) -> int:
    doc = load_config(args.config)
    seed = resolve_seed(args, doc)
    session = session_from_config(doc, seed)
    attack = baseline_attack_from_config(doc)
    result = baseline.run_baseline_session(session, attack)
    payload = {
        "status": result.status.value,
        "ctrl_error_rate": result.ctrl_error_rate,
        "sift_error_rate": result.sift_error_rate,
        "sift_check_histogram": result.sift_check_histogram,
        "alice_key": None if result.alice_key is None else result.alice_key.as_str(),
        "bob_key": None if result.bob_key is None else result.bob_key.as_str(),
        "key_length": None if result.alice_key is None else len(result.alice_key),
        "n_rounds": session.n_rounds,
        "attack": result.attack_label,
    }
    if args.output == "json":
        report = _report_skeleton("baseline", seed, _echo_config(doc, session))
        report["result"] = payload
        _emit(args, reports.canonical_json(report))
    elif args.output == "csv":
        row = reports.flatten("", reports.jsonable(payload))
        _emit(args, reports.render_csv(sorted(row), [row]))
    else:
        rows = [(k, v if v is not None else "-") for k, v in payload.items()]
        _emit(args, reports.render_table(rows, title=f"baseline session ({session.n_rounds} rounds, seed {seed})"))
    return 0 if result.completed else 2


# -- entry point ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sqkd2dof", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_trials in (
        ("run", cmd_run, False),
        ("detect", cmd_detect, True),
        ("theorem1", cmd_theorem1, False),
        ("capacity", cmd_capacity, False),
        ("baseline", cmd_baseline, False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config with 'session' and 'attack' keys")
        p.add_argument("--seed", type=int, default=None, help="overrides config seed and SQKD_SEED")
        p.add_argument("--output", choices=("json", "table", "csv"), default="json")
        p.add_argument("--out", default=None, help="write the report to this path instead of stdout")
        p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
        if needs_trials:
            p.add_argument("--trials", type=int, default=None)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
