"""Command-line interface.

Four commands over JSON spec files: ``eval`` (kernel, mean embedding,
or double integral values), ``verify`` (closed forms against the
numerical oracle), ``bq`` (Bayesian quadrature posterior from a data
file), and ``mmd`` (squared MMD against an empirical sample file).

Output is a single JSON object on stdout; diagnostics go to stderr.
Exit codes: 0 ok, 1 verification failed, 2 unsupported pair, 3 invalid
input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys

import numpy as np

from . import oracle, quadrature
from .dictionary import CLOSED_FORM, embed
from .errors import (
    InvalidSpecError,
    KembedError,
    NumericalFailure,
    UnsupportedPairError,
)
from .kernels import (
    AffineMap,
    ComposedKernel,
    FbmKernel,
    GaussianKernel,
    Kernel,
    Map,
    MaternKernel,
    MatrixValuedKernel,
    NormalICDFMap,
    PeriodicSobolevKernel,
    PowerSeriesKernel,
    ProductKernel,
    SphereSmoothKernel,
    SphereSobolevKernel,
    SumKernel,
    WendlandKernel,
)
from .measures import (
    EmpiricalMeasure,
    GaussianMeasure,
    Measure,
    MixtureMeasure,
    PushforwardMeasure,
    SphereUniformMeasure,
    UniformBoxMeasure,
)
from .stein import SteinKernel

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_UNSUPPORTED = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the invalid-input
    code instead of argparse's default."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# --- strict JSON parsing -----------------------------------------------------


def _check_keys(obj, context: str, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    if not isinstance(obj, dict):
        raise InvalidSpecError(f"{context} must be a JSON object")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise InvalidSpecError(f"unknown key '{key}' in {context}")
    for key in required:
        if key not in obj:
            raise InvalidSpecError(f"missing key '{key}' in {context}")


def _floats(value, context: str) -> list[float]:
    if not isinstance(value, (list, tuple)):
        raise InvalidSpecError(f"{context} must be an array of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InvalidSpecError(f"{context} must contain numbers only")
        out.append(float(v))
    return out


def parse_kernel(obj, context: str = "kernel") -> Kernel:
    _check_keys(obj, context, ("family",), _KERNEL_KEYS_ANY)
    family = obj["family"]
    if family == "gaussian":
        _check_keys(obj, context, ("family",), ("lengthscales", "matrix"))
        if "matrix" in obj:
            return GaussianKernel(matrix=np.asarray(obj["matrix"], dtype=float))
        if "lengthscales" not in obj:
            raise InvalidSpecError(f"missing key 'lengthscales' in {context}")
        return GaussianKernel(
            lengthscales=tuple(_floats(obj["lengthscales"], f"{context}.lengthscales"))
        )
    if family == "matern":
        _check_keys(obj, context, ("family", "nu", "lengthscale"))
        return MaternKernel(nu=float(obj["nu"]), lengthscale=float(obj["lengthscale"]))
    if family == "wendland":
        _check_keys(obj, context, ("family", "order", "lengthscale"))
        return WendlandKernel(
            order=int(obj["order"]), lengthscale=float(obj["lengthscale"])
        )
    if family == "fbm":
        _check_keys(obj, context, ("family", "hurst"), ("domain",))
        domain = obj.get("domain")
        if domain is not None:
            domain = tuple(_floats(domain, f"{context}.domain"))
        return FbmKernel(hurst=float(obj["hurst"]), domain=domain)
    if family == "power_series":
        _check_keys(obj, context, ("family", "terms"))
        terms = []
        if not isinstance(obj["terms"], list):
            raise InvalidSpecError(f"{context}.terms must be an array")
        for i, term in enumerate(obj["terms"]):
            _check_keys(term, f"{context}.terms[{i}]", ("alpha", "coeff"))
            alpha = tuple(
                int(a) for a in _floats(term["alpha"], f"{context}.terms[{i}].alpha")
            )
            terms.append((alpha, float(term["coeff"])))
        return PowerSeriesKernel(terms)
    if family == "sphere_sobolev32":
        _check_keys(obj, context, ("family",))
        return SphereSobolevKernel()
    if family == "sphere_smooth":
        _check_keys(obj, context, ("family",))
        return SphereSmoothKernel()
    if family == "periodic_sobolev":
        _check_keys(obj, context, ("family", "r"))
        return PeriodicSobolevKernel(r=int(obj["r"]))
    if family == "sum":
        _check_keys(obj, context, ("family", "children", "weights"))
        children = [
            parse_kernel(c, f"{context}.children[{i}]")
            for i, c in enumerate(obj["children"])
        ]
        return SumKernel(children, _floats(obj["weights"], f"{context}.weights"))
    if family == "product":
        _check_keys(obj, context, ("family", "children", "block_dims"))
        children = [
            parse_kernel(c, f"{context}.children[{i}]")
            for i, c in enumerate(obj["children"])
        ]
        dims = [int(d) for d in _floats(obj["block_dims"], f"{context}.block_dims")]
        return ProductKernel(children, dims)
    if family == "matrix_valued":
        _check_keys(obj, context, ("family", "base", "matrix"))
        return MatrixValuedKernel(
            base=parse_kernel(obj["base"], f"{context}.base"),
            matrix=np.asarray(obj["matrix"], dtype=float),
        )
    if family == "composed":
        _check_keys(obj, context, ("family", "base", "map"))
        return ComposedKernel(
            base=parse_kernel(obj["base"], f"{context}.base"),
            map=parse_map(obj["map"], f"{context}.map"),
        )
    if family == "stein":
        _check_keys(obj, context, ("family", "base", "target"), ("c",))
        return SteinKernel(
            base=parse_kernel(obj["base"], f"{context}.base"),
            target=parse_measure(obj["target"], f"{context}.target"),
            c=float(obj.get("c", 0.0)),
        )
    raise InvalidSpecError(f"unknown kernel family '{family}' in {context}")


_KERNEL_KEYS_ANY = (
    "lengthscales",
    "matrix",
    "nu",
    "lengthscale",
    "order",
    "hurst",
    "domain",
    "terms",
    "r",
    "children",
    "weights",
    "block_dims",
    "base",
    "map",
    "target",
    "c",
)


def parse_map(obj, context: str = "map") -> Map:
    _check_keys(obj, context, ("kind",), ("scale", "shift"))
    kind = obj["kind"]
    if kind == "affine":
        _check_keys(obj, context, ("kind", "scale", "shift"))
        return AffineMap(
            _floats(obj["scale"], f"{context}.scale"),
            _floats(obj["shift"], f"{context}.shift"),
        )
    if kind == "normal_icdf":
        _check_keys(obj, context, ("kind",))
        return NormalICDFMap()
    raise InvalidSpecError(f"unknown map kind '{kind}' in {context}")


def parse_measure(obj, context: str = "measure") -> Measure:
    _check_keys(obj, context, ("family",), _MEASURE_KEYS_ANY)
    family = obj["family"]
    if family == "uniform_box":
        _check_keys(obj, context, ("family", "lows", "highs"))
        return UniformBoxMeasure(
            tuple(_floats(obj["lows"], f"{context}.lows")),
            tuple(_floats(obj["highs"], f"{context}.highs")),
        )
    if family == "gaussian":
        _check_keys(obj, context, ("family", "mean", "cov"))
        cov = obj["cov"]
        if isinstance(cov, (int, float)) and not isinstance(cov, bool):
            cov_arr = float(cov)
        else:
            cov_arr = np.asarray(cov, dtype=float)
        return GaussianMeasure(
            tuple(_floats(obj["mean"], f"{context}.mean")), cov_arr
        )
    if family == "sphere_uniform":
        _check_keys(obj, context, ("family", "d"))
        return SphereUniformMeasure(int(obj["d"]))
    if family == "mixture":
        _check_keys(obj, context, ("family", "components", "weights"))
        comps = [
            parse_measure(c, f"{context}.components[{i}]")
            for i, c in enumerate(obj["components"])
        ]
        return MixtureMeasure(comps, _floats(obj["weights"], f"{context}.weights"))
    if family == "pushforward":
        _check_keys(obj, context, ("family", "base", "map"))
        return PushforwardMeasure(
            parse_measure(obj["base"], f"{context}.base"),
            parse_map(obj["map"], f"{context}.map"),
        )
    if family == "empirical":
        _check_keys(obj, context, ("family", "points"), ("weights",))
        pts = np.asarray(obj["points"], dtype=float)
        weights = obj.get("weights")
        if weights is not None:
            weights = _floats(weights, f"{context}.weights")
        return EmpiricalMeasure(pts, weights)
    raise InvalidSpecError(f"unknown measure family '{family}' in {context}")


_MEASURE_KEYS_ANY = (
    "lows",
    "highs",
    "mean",
    "cov",
    "d",
    "components",
    "weights",
    "base",
    "map",
    "points",
)


def load_spec(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidSpecError(f"cannot read spec file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"spec file is not valid JSON: {exc}") from None
    _check_keys(
        doc,
        "spec",
        ("schema_version", "kernel", "measure"),
        ("budget", "seed"),
    )
    if doc["schema_version"] != SCHEMA_VERSION:
        raise InvalidSpecError(
            f"unsupported schema_version {doc['schema_version']!r}; "
            f"expected {SCHEMA_VERSION}"
        )
    return doc


def _default_seed() -> int:
    raw = os.environ.get("KED_DEFAULT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InvalidSpecError(
            f"KED_DEFAULT_SEED must be an integer, got {raw!r}"
        ) from None


def _resolve(args_value, doc: dict, key: str, fallback):
    if args_value is not None:
        return args_value
    if key in doc:
        value = doc[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidSpecError(f"spec key '{key}' must be an integer")
        return value
    return fallback


# --- data files ---------------------------------------------------------------

_HEADER_RE = re.compile(r"^x(\d+)$")


def _read_rows(path: str, with_values: bool):
    """Point rows (and optionally a value column) from a CSV file with
    header x1..xd[,y], or from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidSpecError(f"cannot read data file: {exc}") from None
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        return _rows_from_json(stripped, with_values)
    return _rows_from_csv(text, with_values)


def _rows_from_json(text: str, with_values: bool):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"data file is not valid JSON: {exc}") from None
    if isinstance(doc, dict):
        keys = ("points", "values") if with_values else ("points",)
        _check_keys(doc, "data", keys[:1], keys[1:])
        pts = np.asarray(doc["points"], dtype=float)
        vals = None
        if with_values:
            if "values" not in doc:
                raise InvalidSpecError("data file must provide 'values'")
            vals = np.asarray(
                _floats(doc["values"], "data.values"), dtype=float
            )
    elif isinstance(doc, list):
        arr = np.asarray(doc, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise InvalidSpecError("data rows must form a nonempty 2-d array")
        if with_values:
            if arr.shape[1] < 2:
                raise InvalidSpecError(
                    "each data row needs point coordinates plus a value"
                )
            pts, vals = arr[:, :-1], arr[:, -1]
        else:
            pts, vals = arr, None
    else:
        raise InvalidSpecError("data file must hold a JSON object or array")
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidSpecError("data points must form a nonempty 2-d array")
    if not np.all(np.isfinite(pts)):
        raise InvalidSpecError("data points must be finite")
    if vals is not None and vals.shape != (pts.shape[0],):
        raise InvalidSpecError("one value per point is required")
    return pts, vals


def _rows_from_csv(text: str, with_values: bool):
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise InvalidSpecError("data file is empty")
    header = [h.strip() for h in rows[0]]
    has_y = header[-1] == "y"
    coords = header[:-1] if has_y else header
    for i, name in enumerate(coords):
        match = _HEADER_RE.match(name)
        if not match or int(match.group(1)) != i + 1:
            raise InvalidSpecError(
                f"data header must be x1..xd[,y], got {','.join(header)!r}"
            )
    if with_values and not has_y:
        raise InvalidSpecError("data file needs a 'y' column")
    if not coords:
        raise InvalidSpecError("data header names no coordinates")
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InvalidSpecError(f"row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            body.append([float(v) for v in row])
        except ValueError:
            raise InvalidSpecError(f"row {lineno} holds a non-numeric field") from None
    if not body:
        raise InvalidSpecError("data file has a header but no rows")
    arr = np.asarray(body, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidSpecError("data values must be finite")
    if has_y:
        return arr[:, :-1], (arr[:, -1] if with_values else None)
    return arr, None


def _parse_point(text: str, flag: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise InvalidSpecError(f"{flag} must be a comma-separated float list") from None


# --- value serialization -------------------------------------------------------


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload) + "\n")


# --- commands -------------------------------------------------------------------


def cmd_eval(args) -> int:
    doc = load_spec(args.spec)
    kernel = parse_kernel(doc["kernel"])
    measure = parse_measure(doc["measure"])
    budget = _resolve(args.budget, doc, "budget", None)
    seed = _resolve(args.seed, doc, "seed", _default_seed())
    if args.what == "kernel":
        if args.x is None or args.y is None:
            raise InvalidSpecError("--what kernel requires --x and --y")
        x = _parse_point(args.x, "--x")
        y = _parse_point(args.y, "--y")
        value = kernel(x, y)
        payload = {
            "value": _jsonable(value),
            "provenance": CLOSED_FORM,
            "pair": f"{kernel.family}/{measure.family}",
        }
        _emit(payload)
        return EXIT_OK
    embedding = embed(kernel, measure, budget=budget, seed=seed)
    if args.what == "kp":
        if args.x is None:
            raise InvalidSpecError("--what kp requires --x")
        x = _parse_point(args.x, "--x")
        payload = {
            "value": _jsonable(embedding.kp_at(x)),
            "provenance": embedding.kp_provenance,
            "pair": embedding.pair_id,
        }
    else:
        payload = {
            "value": _jsonable(embedding.kpp),
            "provenance": embedding.kpp_provenance,
            "pair": embedding.pair_id,
        }
    _emit(payload)
    return EXIT_OK


def cmd_verify(args) -> int:
    doc = load_spec(args.spec)
    kernel = parse_kernel(doc["kernel"])
    measure = parse_measure(doc["measure"])
    budget = _resolve(args.budget, doc, "budget", None)
    seed = _resolve(args.seed, doc, "seed", _default_seed())
    embedding = embed(kernel, measure, budget=budget, seed=seed)
    if (
        embedding.kp_provenance != CLOSED_FORM
        and embedding.kpp_provenance != CLOSED_FORM
    ):
        raise UnsupportedPairError(
            f"pair {embedding.pair_id} has no closed form to verify"
        )
    checks = []
    all_pass = True
    if embedding.kp_provenance == CLOSED_FORM:
        points = measure.sample(args.points, seed)
        for row in points:
            closed = float(embedding.kp_at(row))
            est = oracle.estimate_kp(kernel, measure, row, budget=budget, seed=seed)
            ok = bool(abs(closed - est.value) <= max(args.tol, 3.0 * est.stderr))
            all_pass = all_pass and ok
            checks.append(
                {
                    "what": "kp",
                    "x": [float(v) for v in np.atleast_1d(row)],
                    "closed": closed,
                    "oracle": float(est.value),
                    "stderr": float(est.stderr),
                    "pass": ok,
                }
            )
    if embedding.kpp_provenance == CLOSED_FORM:
        est = oracle.estimate_kpp(kernel, measure, budget=budget, seed=seed)
        closed = float(embedding.kpp)
        ok = bool(abs(closed - est.value) <= max(args.tol, 3.0 * est.stderr))
        all_pass = all_pass and ok
        checks.append(
            {
                "what": "kpp",
                "closed": closed,
                "oracle": float(est.value),
                "stderr": float(est.stderr),
                "pass": ok,
            }
        )
    _emit({"pair": embedding.pair_id, "checks": checks, "pass": all_pass})
    return EXIT_OK if all_pass else EXIT_VERIFY_FAILED


def cmd_bq(args) -> int:
    doc = load_spec(args.spec)
    kernel = parse_kernel(doc["kernel"])
    measure = parse_measure(doc["measure"])
    budget = _resolve(args.budget, doc, "budget", None)
    seed = _resolve(args.seed, doc, "seed", _default_seed())
    points, values = _read_rows(args.data, with_values=True)
    embedding = embed(kernel, measure, budget=budget, seed=seed)
    problem = quadrature.make_problem(
        embedding, points, values, kernel=kernel, jitter=args.jitter
    )
    posterior = quadrature.bq_posterior(problem)
    _emit(
        {
            "mean": float(posterior.mean),
            "variance": float(posterior.variance),
            "weights": [float(w) for w in posterior.weights],
            "jitter_applied": float(posterior.jitter),
        }
    )
    return EXIT_OK


def cmd_mmd(args) -> int:
    doc = load_spec(args.spec)
    kernel = parse_kernel(doc["kernel"])
    measure = parse_measure(doc["measure"])
    budget = _resolve(args.budget, doc, "budget", None)
    seed = _resolve(args.seed, doc, "seed", _default_seed())
    points, _ = _read_rows(args.samples, with_values=False)
    embedding = embed(kernel, measure, budget=budget, seed=seed)
    empirical = EmpiricalMeasure(points)
    value = quadrature.mmd2(embedding, empirical, kernel=kernel)
    _emit({"mmd2": float(value)})
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="kembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a kernel or embedding")
    p_eval.add_argument("--spec", required=True)
    p_eval.add_argument("--what", required=True, choices=("kp", "kpp", "kernel"))
    p_eval.add_argument("--x", default=None)
    p_eval.add_argument("--y", default=None)
    p_eval.add_argument("--budget", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="check closed forms against the oracle")
    p_verify.add_argument("--spec", required=True)
    p_verify.add_argument("--budget", type=int, default=None)
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--tol", type=float, default=1e-6)
    p_verify.add_argument("--points", type=int, default=20)
    p_verify.set_defaults(func=cmd_verify)

    p_bq = sub.add_parser("bq", help="Bayesian quadrature posterior")
    p_bq.add_argument("--spec", required=True)
    p_bq.add_argument("--data", required=True)
    p_bq.add_argument("--jitter", type=float, default=None)
    p_bq.add_argument("--budget", type=int, default=None)
    p_bq.add_argument("--seed", type=int, default=None)
    p_bq.set_defaults(func=cmd_bq)

    p_mmd = sub.add_parser("mmd", help="squared MMD against an empirical sample")
    p_mmd.add_argument("--spec", required=True)
    p_mmd.add_argument("--samples", required=True)
    p_mmd.add_argument("--budget", type=int, default=None)
    p_mmd.add_argument("--seed", type=int, default=None)
    p_mmd.set_defaults(func=cmd_mmd)

    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnsupportedPairError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except InvalidSpecError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KembedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
