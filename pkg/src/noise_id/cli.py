"""Command-line entry point.

Grammar: ``noise-id <check|generate|estimate|witness|simulate-2nn|bound>``.
Exit codes: 0 success, 2 validation failure, 3 capability (insufficient
observations), 4 search exhausted, 1 internal error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import consensus, features, identifiability, noisegen
from .datasets import NoisyDataset
from .errors import (
    CapabilityError,
    NoiseIdError,
    SearchExhaustedError,
    ValidationError,
)
from .matrices import Prior, Scenario, TransitionMatrix

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_CAPABILITY = 3
EXIT_SEARCH = 4

SCENARIO_FIELDS = {
    "K", "prior", "T", "noise_model", "features", "groups", "seed", "n", "p",
}
NOISE_MODELS = {"asymmetric", "instance", "part_dependent", "explicit"}


class ScenarioFile:
    """Validated view of a scenario JSON document."""

    def __init__(self, doc: dict, path: str = "<memory>"):
        if not isinstance(doc, dict):
            raise ValidationError(f"{path}: scenario must be a JSON object")
        unknown = set(doc) - SCENARIO_FIELDS
        if unknown:
            raise ValidationError(f"{path}: unknown fields {sorted(unknown)}")
        if "K" not in doc:
            raise ValidationError(f"{path}: missing required field 'K'")
        self.K = int(doc["K"])
        self.seed = doc.get("seed")
        self.n = int(doc.get("n", 0)) or None
        self.p = int(doc.get("p", 0)) or None
        self.path = path

        prior = doc.get("prior")
        self.prior = Prior(prior) if prior is not None else Prior(np.full(self.K, 1.0 / self.K))
        if self.prior.K != self.K:
            raise ValidationError(f"{path}: prior length does not match K")

        nm = doc.get("noise_model") or {"type": "explicit"}
        if not isinstance(nm, dict) or nm.get("type") not in NOISE_MODELS:
            raise ValidationError(
                f"{path}: noise_model.type must be one of {sorted(NOISE_MODELS)}"
            )
        self.noise_model = nm

        self.T = None
        if nm["type"] == "asymmetric":
            self.T = noisegen.asymmetric_T(self.K, float(nm["eps"]))
        elif nm["type"] == "part_dependent":
            pm = noisegen.PartModel(tuple(np.asarray(t, float) for t in nm["parts"]))
            self.T = noisegen.part_dependent_T(np.asarray(nm["weights"], float), pm)
        elif doc.get("T") is not None:
            self.T = TransitionMatrix(np.asarray(doc["T"], dtype=float))
        # a missing T is only an error for commands that need one; scenario()
        # raises then
        if self.T is not None and self.T.K != self.K:
            raise ValidationError(f"{path}: T shape does not match K")

        self.features = doc.get("features")
        if self.features is not None:
            extra = set(self.features) - {"d_star", "cardinalities", "min_kruskal"}
            if extra:
                raise ValidationError(f"{path}: unknown feature fields {sorted(extra)}")
        self.groups = doc.get("groups")
        if self.groups is not None and "count" not in self.groups:
            raise ValidationError(f"{path}: groups requires field 'count'")

    def scenario(self) -> Scenario:
        if self.T is None:
            raise ValidationError(f"{self.path}: no transition matrix available")
        return Scenario(T=self.T, prior=self.prior)


def load_scenario(path) -> ScenarioFile:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{e.lineno}: invalid JSON: {e.msg}")
    return ScenarioFile(doc, str(path))


def load_matrix(path) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{e.lineno}: invalid JSON: {e.msg}")
    if isinstance(doc, dict) and "T" in doc:
        doc = doc["T"]
    return np.asarray(doc, dtype=float)


def emit(report: dict, args) -> None:
    if not getattr(args, "no_timestamp", False):
        report = dict(report)
        report["timestamp"] = datetime.datetime.now().isoformat(timespec="seconds")
    if getattr(args, "json", False):
        print(json.dumps(report, indent=2, sort_keys=True, default=_jsonify))
    else:
        for key, value in report.items():
            if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
                print(f"{key}:")
                for row in value:
                    print("  " + "  ".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))
            else:
                print(f"{key}: {_fmt(value)}")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _jsonify(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"not JSON serializable: {type(v)}")


def _require_seed(args, sf: ScenarioFile | None = None):
    seed = args.seed
    if seed is None and sf is not None:
        seed = sf.seed
    if seed is None:
        if getattr(args, "strict", False):
            raise ValidationError("--strict requires an explicit seed")
        seed = 0
    return seed


def cmd_check(args) -> int:
    sf = load_scenario(args.scenario)
    mode = args.mode
    if mode == "instance3":
        report = identifiability.check_instance_three_labels(sf.scenario().T)
    elif mode == "kruskal":
        p = sf.p or 3
        obs = identifiability.ObservationModel((sf.scenario().T.as_obs(),) * p, sf.K)
        report = identifiability.check_kruskal_sum(obs)
    elif mode == "group":
        if sf.features is None:
            raise ValidationError("group mode requires a 'features' section")
        fm = features.gen_feature_model(
            sf.K,
            int(sf.features["d_star"]),
            sf.features.get("cardinalities", 2),
            int(sf.features.get("min_kruskal", 2)),
            seed=_require_seed(args, sf),
        )
        report = identifiability.check_group_features(
            sf.scenario().T, features.stack_observations(None, fm)
        )
    elif mode == "unknown-groups":
        if sf.features is None or sf.groups is None:
            raise ValidationError(
                "unknown-groups mode requires 'features' and 'groups' sections"
            )
        report = identifiability.check_unknown_groups(
            int(sf.groups["count"]), sf.K, int(sf.features["d_star"])
        )
    else:  # generic
        if sf.features is None:
            raise ValidationError("generic mode requires a 'features' section")
        cards = sf.features.get("cardinalities", 2)
        if isinstance(cards, int):
            cards = [cards] * int(sf.features["d_star"])
        report = identifiability.check_generic(sf.K, cards)
    emit({"mode": mode, **report.to_dict()}, args)
    return EXIT_OK


def cmd_generate(args) -> int:
    sf = load_scenario(args.scenario)
    seed = _require_seed(args, sf)
    n = sf.n or 1000
    nm = sf.noise_model
    if nm["type"] == "instance":
        rng = np.random.default_rng(seed)
        S = int(nm.get("S", 10))
        x = rng.standard_normal((n, S))
        y0 = (rng.random(n)[:, None] > np.cumsum(sf.prior.weights)[None, :]).sum(1)
        noisy, pvec = noisegen.instance_noise(
            x, y0 + 1, float(nm["eps"]), sf.K, (seed, 1)
        )
        ds = NoisyDataset(
            y=y0 + 1,
            noisy=noisy,
            K=sf.K,
            x=x,
            provenance={
                "model": "instance",
                "eps": float(nm["eps"]),
                "S": S,
                "K": sf.K,
                "n": n,
                "seed": seed,
                "prior": sf.prior.weights.tolist(),
            },
        )
        ds.to_csv(args.out)
        if args.emit_rows:
            rows_path = Path(args.out).with_suffix(".rows.csv")
            np.savetxt(rows_path, pvec, delimiter=",", fmt="%.17g")
    else:
        p = sf.p or 3
        ds = noisegen.sample_iid_noisy(sf.prior, sf.scenario().T, p, n, seed)
        ds.provenance["noise_model"] = nm
        ds.to_csv(args.out)
    emit(
        {"written": str(args.out), "records": ds.n, "noisy_labels": ds.p, "seed": seed},
        args,
    )
    return EXIT_OK


def cmd_estimate(args) -> int:
    seed = _require_seed(args)
    if args.exact:
        sf = load_scenario(args.source)
        joint = consensus.exact_joint(sf.scenario(), 3)
        result = consensus.estimate(joint, restarts=args.restarts, seed=seed)
        truth = sf.scenario().T.entries if args.truth is None else load_matrix(args.truth)
    else:
        ds = NoisyDataset.from_csv(args.source)
        if args.from_features:
            if ds.r is None or ds.r.shape[1] < 2 or ds.p < 1:
                raise CapabilityError(
                    "feature-path estimation needs two feature columns plus a "
                    "noisy label (three observed variables)"
                )
            result = features.estimate_from_features(
                ds, ds.K, restarts=args.restarts, seed=seed
            )
        else:
            if ds.p < 3:
                raise CapabilityError(
                    f"dataset has p={ds.p} noisy labels; three conditionally "
                    "independent labels are required for instance-level recovery"
                )
            joint = consensus.empirical_joint(ds)
            result = consensus.estimate(
                joint, restarts=args.restarts, seed=seed, residual_target=np.inf
            )
        truth = load_matrix(args.truth) if args.truth else None
    report = {
        "prior": result.scenario.prior.weights.tolist(),
        "T": result.scenario.T.entries.tolist(),
        "residual": result.residual,
        "restarts_used": result.restarts_used,
        "converged": result.converged,
        "alignment_permutation": list(result.permutation),
    }
    if truth is not None:
        report["err"] = consensus.err_metric(
            result.scenario.T.entries, truth, permutation_invariant=True
        )
    emit(report, args)
    return EXIT_OK


def cmd_witness(args) -> int:
    seed = _require_seed(args)
    w = consensus.witness_p2(args.gamma, args.e_plus, args.e_minus, seed=seed)
    # re-verify before printing
    got = consensus.binary_stats(w.gamma, w.e_plus, w.e_minus)
    want = consensus.binary_stats(args.gamma, args.e_plus, args.e_minus)
    residual = max(abs(a - b) for a, b in zip(got.as_tuple(), want.as_tuple()))
    if residual > 1e-8:
        raise SearchExhaustedError("witness failed re-verification")
    emit(
        {
            "input": [args.gamma, args.e_plus, args.e_minus],
            "witness": [w.gamma, w.e_plus, w.e_minus],
            "statistic_residual": residual,
            "parameter_distance": w.distance,
            "statistics": list(want.as_tuple()),
        },
        args,
    )
    return EXIT_OK


def cmd_simulate_2nn(args) -> int:
    try:
        doc = json.loads(Path(args.params).read_text())
    except FileNotFoundError:
        raise ValidationError(f"{args.params}: no such file")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{args.params}:{e.lineno}: invalid JSON: {e.msg}")
    seed = _require_seed(args)
    try:
        params = noisegen.UnstructuredParams(
            lam=tuple(doc["lambda"]),
            N=int(doc["N"]),
            epsilon_close=float(doc.get("epsilon_close", 0.0)),
            label_probs=np.asarray(doc["label_probs"], dtype=float),
            T=TransitionMatrix(np.asarray(doc["T"], dtype=float)),
        )
    except KeyError as e:
        raise ValidationError(f"{args.params}: missing field {e}")
    rates = []
    thresholds = []
    for t in range(args.trials):
        ds = noisegen.unstructured_process(params, (seed, t))
        thresholds.append(ds.threshold_N)
        rates.append(noisegen.check_2nn(ds))
    rates = np.asarray(rates)
    threshold = float(np.max(thresholds))
    emit(
        {
            "N": params.N,
            "threshold": threshold,
            "clears_threshold": bool(params.N > threshold),
            "trials": args.trials,
            "mean_satisfaction": float(rates.mean()),
            "all_satisfied_fraction": float((rates == 1.0).mean()),
            "note": "probability bound 1 - N*exp(-2N) noted, not asserted",
        },
        args,
    )
    return EXIT_OK


def cmd_bound(args) -> int:
    lhs, rhs, holds = consensus.mixing_bound(
        load_matrix(args.t1), load_matrix(args.t2), load_matrix(args.tstar)
    )
    emit({"lhs": lhs, "rhs": rhs, "holds": bool(holds)}, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="noise-id",
        description="Identifiability checks, synthetic noisy-label data, and "
        "transition-matrix recovery.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true", help="emit JSON instead of text")
        p.add_argument("--no-timestamp", action="store_true")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--strict", action="store_true", help="require an explicit seed")

    p = sub.add_parser("check", help="run an identifiability checker")
    p.add_argument("scenario")
    p.add_argument(
        "--mode",
        choices=["instance3", "kruskal", "group", "unknown-groups", "generic"],
        default="instance3",
    )
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("generate", help="generate a synthetic noisy dataset")
    p.add_argument("scenario")
    p.add_argument("-o", "--out", required=True)
    p.add_argument(
        "--emit-rows",
        action="store_true",
        help="also dump per-instance transition rows (instance model)",
    )
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="recover (prior, T) from data")
    p.add_argument("source", help="dataset CSV, or scenario file with --exact")
    p.add_argument("--exact", action="store_true", help="fit the exact forward joint")
    p.add_argument("--from-features", action="store_true")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--truth", default=None, help="matrix file for error reporting")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("witness", help="two-label non-identifiability witness")
    p.add_argument("gamma", type=float)
    p.add_argument("e_plus", type=float)
    p.add_argument("e_minus", type=float)
    common(p)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("simulate-2nn", help="triplet process and 2-NN satisfaction")
    p.add_argument("params")
    p.add_argument("--trials", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_simulate_2nn)

    p = sub.add_parser("bound", help="two-group mixing error lower bound")
    p.add_argument("t1")
    p.add_argument("t2")
    p.add_argument("tstar")
    common(p)
    p.set_defaults(func=cmd_bound)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapabilityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAPABILITY
    except SearchExhaustedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SEARCH
    except NoiseIdError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
