"""
Instance storage for the sequential pricing lab
Handles the canonical JSON codecs for instance files, ex ante solutions and run reports
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import BuyerDistribution, ItemPricing, PricingError, RandomPricing, Valuation, ValuationFamily, items_of
from .exante import ExAnteSolution
from .instances import RrsLbFamily, RrsLbParams, XosLbParams
from .log import logger
from .mechanisms import Instance, MonteCarloResult
from .settings import get_setting

PathLike = Union[str, Path]
Reference = Optional[Tuple[RandomPricing, ...]]


class InstanceFormatError(PricingError):
    """A JSON document does not describe a valid instance, solution or report"""


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def encode_number(x: float) -> Union[float, int, str]:
    """%.12g float, or the strings "inf" / "nan" """
    if isinstance(x, (bool, int, np.integer)):
        return int(x)
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return float(f"{x:.12g}")


def decode_number(x: Any) -> float:
    if isinstance(x, str):
        if x in ("inf", "-inf", "nan"):
            return float(x)
        raise InstanceFormatError(f"Expected a number or \"inf\", got {x!r}")
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InstanceFormatError(f"Expected a number, got {x!r}")
    return float(x)


def _canonical(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return encode_number(obj)
    return obj


def canonical_dumps(obj: Any) -> str:
    """Sorted keys, %.12g floats, inf as a string; identical inputs give identical bytes"""
    return json.dumps(_canonical(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path: PathLike, doc: Dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_dumps(doc))
    logger.debug(f"Wrote {path}")


def _read(path: PathLike) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise InstanceFormatError(f"{path} must hold a JSON object")
    return doc


def _field(doc: Dict, key: str) -> Any:
    if key not in doc:
        raise InstanceFormatError(f"Missing field {key!r}")
    return doc[key]


def _normalized(probs: Sequence[float]) -> List[float]:
    # %.12g rounding leaves the total a few ulps away from 1
    total = sum(probs)
    if abs(total - 1.0) > 1e-9:
        raise InstanceFormatError(f"Probabilities sum to {total!r}, expected 1")
    out = list(probs)
    heavy = max(range(len(out)), key=lambda k: out[k])
    out[heavy] = 1.0 - sum(x for k, x in enumerate(out) if k != heavy)
    return out


def _mask_items(mask: int) -> List[int]:
    return sorted(items_of(mask))


def _items_mask(items: Sequence[int]) -> int:
    return sum(1 << int(j) for j in items)


# ---------------------------------------------------------------------------
# Pricings
# ---------------------------------------------------------------------------


def encode_pricing(pricing: Union[ItemPricing, RandomPricing]) -> List[Dict]:
    if isinstance(pricing, ItemPricing):
        pricing = RandomPricing.point(pricing)
    return [{"prob": prob, "prices": list(p.prices)} for prob, p in pricing.support]


def decode_pricing(doc: Sequence[Dict]) -> RandomPricing:
    if not isinstance(doc, list) or not doc:
        raise InstanceFormatError("A pricing must be a nonempty list of {prob, prices}")
    probs = _normalized([decode_number(_field(atom, "prob")) for atom in doc])
    atoms = [ItemPricing(tuple(decode_number(x) for x in _field(atom, "prices"))) for atom in doc]
    return RandomPricing(tuple(zip(probs, atoms)))


# ---------------------------------------------------------------------------
# Valuations and instances
# ---------------------------------------------------------------------------


def encode_valuation(v: Valuation) -> Dict:
    doc: Dict[str, Any] = {"kind": v.kind}
    if v.kind in ("additive", "unit_demand", "table"):
        doc["values"] = list(v.values)
    elif v.kind == "xos":
        doc["clauses"] = [list(c) for c in v.clauses]
    elif v.kind == "bundle_threshold":
        doc["bundles"] = [_mask_items(b) for b in v.bundles]
    elif v.kind == "xos_lb":
        p = v.params
        doc.update(k=p.k, t=p.t, A=_mask_items(p.A), h=p.h, ell=p.ell, eps=p.eps, relaxed=p.relaxed)
    elif v.kind == "rrs_lb":
        p = v.params
        doc.update(i=p.i, R=_mask_items(p.R), beta=p.beta, eps=p.eps)
    if v.class_tag is not None:
        doc["class_tag"] = v.class_tag
    if v.support_mask is not None:
        doc["support"] = _mask_items(v.support_mask)
    return doc


def decode_valuation(doc: Dict, m: int) -> Valuation:
    kind = _field(doc, "kind")
    support = doc.get("support")
    extra = {
        "class_tag": doc.get("class_tag"),
        "support_mask": None if support is None else _items_mask(support),
    }
    try:
        if kind in ("additive", "unit_demand", "table"):
            return Valuation(kind, m, values=tuple(decode_number(x) for x in _field(doc, "values")), **extra)
        if kind == "xos":
            clauses = tuple(tuple(decode_number(x) for x in c) for c in _field(doc, "clauses"))
            return Valuation(kind, m, clauses=clauses, **extra)
        if kind == "bundle_threshold":
            return Valuation(kind, m, bundles=tuple(_items_mask(b) for b in _field(doc, "bundles")), **extra)
        if kind == "xos_lb":
            params = XosLbParams(
                m,
                int(_field(doc, "k")),
                int(_field(doc, "t")),
                _items_mask(_field(doc, "A")),
                int(_field(doc, "h")),
                int(_field(doc, "ell")),
                decode_number(_field(doc, "eps")),
                bool(doc.get("relaxed", False)),
            )
            return Valuation(kind, m, params=params, **extra)
        if kind == "rrs_lb":
            params = RrsLbParams(
                m,
                int(_field(doc, "i")),
                _items_mask(_field(doc, "R")),
                decode_number(_field(doc, "beta")),
                decode_number(_field(doc, "eps")),
            )
            return Valuation(kind, m, params=params, **extra)
    except InstanceFormatError:
        raise
    except (TypeError, KeyError) as e:
        raise InstanceFormatError(f"Malformed {kind} valuation: {e}") from e
    raise InstanceFormatError(f"Unknown valuation kind: {kind!r}")


def encode_buyer(D: ValuationFamily) -> Dict:
    if isinstance(D, RrsLbFamily):
        return {"family": "rrs_lb", "m": D.m, "eps": D.eps}
    return {"support": [{"prob": prob, "valuation": encode_valuation(v)} for prob, v in D.iter_support()]}


def decode_buyer(doc: Dict, m: int, config: Optional[Dict] = None) -> ValuationFamily:
    if "family" in doc:
        if doc["family"] != "rrs_lb":
            raise InstanceFormatError(f"Unknown buyer family: {doc['family']!r}")
        return RrsLbFamily(int(_field(doc, "m")), decode_number(_field(doc, "eps")), get_setting(config, "rrs_lb_enum_limit"))
    support = _field(doc, "support")
    if not isinstance(support, list) or not support:
        raise InstanceFormatError("A buyer needs a nonempty support list")
    probs = _normalized([decode_number(_field(atom, "prob")) for atom in support])
    valuations = [decode_valuation(_field(atom, "valuation"), m) for atom in support]
    return BuyerDistribution(tuple(zip(probs, valuations)))


def encode_instance(instance: Instance, reference: Reference = None) -> Dict:
    doc: Dict[str, Any] = {
        "m": instance.m,
        "meta": dict(instance.meta),
        "buyers": [encode_buyer(D) for D in instance.buyers],
    }
    if reference is not None:
        doc["reference"] = [encode_pricing(r) for r in reference]
    return doc


def decode_instance(doc: Dict, config: Optional[Dict] = None) -> Tuple[Instance, Reference]:
    """
    Parse an instance document.

    Returns:
        (Instance, per-buyer reference pricings or None)

    Raises:
        InstanceFormatError: If a field is missing or malformed
    """
    m = _field(doc, "m")
    if not isinstance(m, int) or m < 1:
        raise InstanceFormatError(f"m must be a positive integer, got {m!r}")
    buyers = tuple(decode_buyer(b, m, config) for b in _field(doc, "buyers"))
    if not buyers:
        raise InstanceFormatError("An instance needs at least one buyer")
    if any(D.m != m for D in buyers):
        raise InstanceFormatError(f"Every buyer must have m = {m} items")
    reference = None
    if doc.get("reference") is not None:
        reference = tuple(decode_pricing(r) for r in doc["reference"])
        if len(reference) != len(buyers):
            raise InstanceFormatError(f"{len(reference)} reference pricings for {len(buyers)} buyers")
    return Instance(buyers, dict(doc.get("meta", {}))), reference


def save_instance(path: PathLike, instance: Instance, reference: Reference = None) -> None:
    _write(path, encode_instance(instance, reference))


def load_instance(path: PathLike, config: Optional[Dict] = None) -> Tuple[Instance, Reference]:
    return decode_instance(_read(path), config)


# ---------------------------------------------------------------------------
# Ex ante solutions and run reports
# ---------------------------------------------------------------------------


def encode_exante(sol: ExAnteSolution) -> Dict:
    return {
        "value": sol.value,
        "x": [list(row) for row in sol.x],
        "pricings": [encode_pricing(r) for r in sol.pricings],
    }


def decode_exante(doc: Dict) -> ExAnteSolution:
    x = tuple(tuple(decode_number(a) for a in row) for row in _field(doc, "x"))
    pricings = tuple(decode_pricing(r) for r in _field(doc, "pricings"))
    if len(x) != len(pricings):
        raise InstanceFormatError(f"{len(x)} constraint rows for {len(pricings)} pricings")
    return ExAnteSolution(x, pricings, decode_number(_field(doc, "value")))


def save_exante(path: PathLike, sol: ExAnteSolution) -> None:
    _write(path, encode_exante(sol))


def load_exante(path: PathLike) -> ExAnteSolution:
    return decode_exante(_read(path))


def revenue_ratio(value: float, mean_revenue: float) -> float:
    return value / mean_revenue if mean_revenue > 0 else math.inf


def run_report(result: MonteCarloResult, exante: ExAnteSolution) -> Dict:
    """RunReport document; ratio is exante.value / mean_revenue"""
    return {
        "exante": encode_exante(exante),
        "mechanism": result.mechanism,
        "trials": result.trials,
        "seed": result.seed,
        "mean_revenue": result.mean,
        "stderr": result.stderr,
        "ratio": revenue_ratio(exante.value, result.mean),
        "availability": result.availability,
        "buyer_means": result.buyer_means,
        "buyer_stderrs": result.buyer_stderrs,
        "skip_rate": result.skip_rate,
        "max_revenue": result.max_revenue,
    }


def save_run_report(path: PathLike, result: MonteCarloResult, exante: ExAnteSolution) -> None:
    _write(path, run_report(result, exante))


def save_revenue_csv(path: PathLike, revenues: Sequence[float]) -> None:
    """Per-trial revenues, one row per trial"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["trial", "revenue"])
        for t, rev in enumerate(revenues):
            writer.writerow([t, encode_number(rev)])
