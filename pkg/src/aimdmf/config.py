"""Model configuration files.

Files are TOML.  Layout:

    [network]
    J = 1                      # node count
    K = 2                      # class count
    allocation = [1.0, 1.0]    # row-major J*K matrix
    counts = [2000, 2000]      # optional per-class populations

    [class.1]                  # classes are numbered 1..K
    r = 0.5                    # multiplicative decrease factor, in (0,1)
    p = 0.5                    # limit weight; weights sum to 1
    drift = {kind = "constant", a = 1.0}
    loss = {form = "multiplicative", scope = "aggregate",
            rate = {kind = "affine", c0 = 0.5, c1 = 1.0}}

Drift tables:
    {kind = "constant", a = <pos>}
    {kind = "reciprocal", tau = <pos>, node_terms = [<rate> x J]}

Rate tables (the scalar family c0 + c1 * x**p):
    {kind = "constant", c0 = <nonneg>}
    {kind = "affine", c0 = <nonneg>, c1 = <nonneg>}
    {kind = "power", c0 = <nonneg>, c1 = <nonneg>, p = <pos>}

Loss tables:
    {form = "multiplicative", scope = "aggregate", rate = <rate>}
    {form = "multiplicative", scope = "per_node", delta = <nonneg>,
     node_terms = [<rate> x J]}
    {form = "general", w_rate = <rate>, delta = <nonneg>,
     node_terms = [<rate> x J], monotone_in_w = <bool>}

Unknown keys anywhere are rejected, as are structural violations (weights
not summing to 1, nonzero node terms at unused nodes, and so on).
"""

from __future__ import annotations

import os

try:
    import tomllib as _toml  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml

import numpy as np

from .model import (
    ClassSpec,
    ConstantDrift,
    GeneralLoss,
    ModelError,
    MultiplicativeLoss,
    NetworkModel,
    ReciprocalDrift,
    ScalarRate,
)

__all__ = ["ConfigError", "load_model", "loads_model"]


class ConfigError(ValueError):
    """Raised for malformed or invalid model configuration files."""


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _number(table: dict, key: str, where: str, required=True):
    if key not in table:
        if required:
            raise ConfigError(f"missing key {key!r} in {where}")
        return None
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    return float(v)


def _parse_rate(table, where: str) -> ScalarRate:
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a rate table")
    kind = table.get("kind")
    if kind == "constant":
        _check_keys(table, {"kind", "c0"}, where)
        return _wrap(lambda: ScalarRate("constant", _number(table, "c0", where)), where)
    if kind == "affine":
        _check_keys(table, {"kind", "c0", "c1"}, where)
        return _wrap(
            lambda: ScalarRate(
                "affine", _number(table, "c0", where), _number(table, "c1", where)
            ),
            where,
        )
    if kind == "power":
        _check_keys(table, {"kind", "c0", "c1", "p"}, where)
        return _wrap(
            lambda: ScalarRate(
                "power",
                _number(table, "c0", where),
                _number(table, "c1", where),
                _number(table, "p", where),
            ),
            where,
        )
    raise ConfigError(f"{where}.kind must be constant, affine, or power")


def _wrap(build, where: str):
    try:
        return build()
    except ModelError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_rate_list(value, j: int, where: str) -> tuple:
    if not isinstance(value, list) or len(value) != j:
        raise ConfigError(f"{where} must list one rate table per node ({j} entries)")
    return tuple(_parse_rate(t, f"{where}[{i}]") for i, t in enumerate(value))


def _parse_drift(table, j: int, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a drift table")
    kind = table.get("kind")
    if kind == "constant":
        _check_keys(table, {"kind", "a"}, where)
        return _wrap(lambda: ConstantDrift(_number(table, "a", where)), where)
    if kind == "reciprocal":
        _check_keys(table, {"kind", "tau", "node_terms"}, where)
        terms = _parse_rate_list(table.get("node_terms"), j, f"{where}.node_terms")
        return _wrap(lambda: ReciprocalDrift(_number(table, "tau", where), terms), where)
    raise ConfigError(f"{where}.kind must be constant or reciprocal")


def _parse_loss(table, j: int, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a loss table")
    form = table.get("form")
    if form == "multiplicative":
        scope = table.get("scope")
        if scope == "aggregate":
            _check_keys(table, {"form", "scope", "rate"}, where)
            rate = _parse_rate(table.get("rate"), f"{where}.rate")
            return _wrap(lambda: MultiplicativeLoss("aggregate", rate=rate), where)
        if scope == "per_node":
            _check_keys(table, {"form", "scope", "delta", "node_terms"}, where)
            terms = _parse_rate_list(table.get("node_terms"), j, f"{where}.node_terms")
            delta = _number(table, "delta", where, required=False)
            return _wrap(
                lambda: MultiplicativeLoss(
                    "per_node", delta=0.0 if delta is None else delta, node_terms=terms
                ),
                where,
            )
        raise ConfigError(f"{where}.scope must be per_node or aggregate")
    if form == "general":
        _check_keys(
            table, {"form", "w_rate", "delta", "node_terms", "monotone_in_w"}, where
        )
        if "monotone_in_w" not in table or not isinstance(table["monotone_in_w"], bool):
            raise ConfigError(f"{where}.monotone_in_w must be declared true or false")
        w_rate = _parse_rate(table.get("w_rate"), f"{where}.w_rate")
        terms = ()
        if "node_terms" in table:
            terms = _parse_rate_list(table["node_terms"], j, f"{where}.node_terms")
        delta = _number(table, "delta", where, required=False)
        return _wrap(
            lambda: GeneralLoss(
                w_rate=w_rate,
                monotone_in_w=table["monotone_in_w"],
                delta=0.0 if delta is None else delta,
                node_terms=terms,
            ),
            where,
        )
    raise ConfigError(f"{where}.form must be multiplicative or general")


def loads_model(text: str) -> NetworkModel:
    """Parse a model from TOML text; see the module docstring for the schema."""
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc
    _check_keys(doc, {"network", "class"}, "top level")
    net = doc.get("network")
    if not isinstance(net, dict):
        raise ConfigError("missing [network] section")
    _check_keys(net, {"J", "K", "allocation", "counts"}, "[network]")
    j = net.get("J")
    k = net.get("K")
    if not isinstance(j, int) or isinstance(j, bool) or j < 1:
        raise ConfigError("[network].J must be an integer >= 1")
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ConfigError("[network].K must be an integer >= 1")
    alloc = net.get("allocation")
    if not isinstance(alloc, list) or len(alloc) != j * k:
        raise ConfigError(f"[network].allocation must be a flat row-major list of {j}*{k} numbers")
    for v in alloc:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("[network].allocation entries must be numbers")
    a = np.array(alloc, dtype=float).reshape(j, k)
    counts = net.get("counts")
    if counts is not None:
        if not isinstance(counts, list) or len(counts) != k:
            raise ConfigError(f"[network].counts must list {k} integers")
        for v in counts:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError("[network].counts entries must be integers")
    ctab = doc.get("class")
    if not isinstance(ctab, dict):
        raise ConfigError("missing [class.<k>] sections")
    expected = {str(i) for i in range(1, k + 1)}
    got = set(ctab)
    if got != expected:
        raise ConfigError(
            f"class sections must be class.1 .. class.{k}; got {sorted(got)}"
        )
    classes = []
    for i in range(1, k + 1):
        sec = ctab[str(i)]
        where = f"[class.{i}]"
        if not isinstance(sec, dict):
            raise ConfigError(f"{where} must be a table")
        _check_keys(sec, {"r", "p", "drift", "loss"}, where)
        r = _number(sec, "r", where)
        p = _number(sec, "p", where)
        drift = _parse_drift(sec.get("drift"), j, f"{where}.drift")
        loss = _parse_loss(sec.get("loss"), j, f"{where}.loss")
        classes.append(_wrap(lambda: ClassSpec(r=r, p=p, drift=drift, loss=loss), where))
    try:
        return NetworkModel(
            allocation=a,
            classes=tuple(classes),
            counts=tuple(counts) if counts is not None else None,
        )
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc


def load_model(path: str) -> NetworkModel:
    """Load a model configuration file; raises ConfigError on any problem."""
    if not os.path.exists(path):
        raise ConfigError(f"model file not found: {path}")
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    try:
        return loads_model(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
