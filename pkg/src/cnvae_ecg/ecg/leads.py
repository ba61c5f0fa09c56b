"""Limb-lead algebra: Einthoven's law and Goldberger's augmented leads."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .record import CHEST_LEADS, LEADS_8, LEADS_12, EcgRecord


def _require(rec: EcgRecord, names) -> None:
    for name in names:
        if name not in rec.leads:
            raise ContractError(f"record is missing lead {name}")


def derive_limb_leads(lead_i: np.ndarray, lead_iii: np.ndarray) -> dict[str, np.ndarray]:
    lead_ii = lead_i + lead_iii
    return {
        "II": lead_ii,
        "aVR": -(lead_i + lead_ii) / 2,
        "aVL": (lead_i - lead_iii) / 2,
        "aVF": (lead_ii + lead_iii) / 2,
    }


def expand_to_twelve(rec: EcgRecord) -> EcgRecord:
    _require(rec, LEADS_8)
    if rec.n_leads != 8:
        raise ContractError(f"expand_to_twelve expects an 8-lead record, got {rec.n_leads} leads")
    leads = {"I": rec.leads["I"], "III": rec.leads["III"], **derive_limb_leads(rec.leads["I"], rec.leads["III"])}
    leads.update({k: rec.leads[k] for k in CHEST_LEADS})
    return EcgRecord({k: leads[k].copy() for k in LEADS_12}, rec.fs, rec.labels, rec.generated)


def limb_residuals(rec: EcgRecord) -> dict[str, float]:
    """Max absolute violation of each limb identity on a 12-lead record."""
    _require(rec, LEADS_12)
    expected = derive_limb_leads(rec.leads["I"], rec.leads["III"])
    if rec.length == 0:
        return {k: 0.0 for k in expected}
    return {k: float(np.max(np.abs(rec.leads[k] - v))) for k, v in expected.items()}


def reduce_to_eight(rec: EcgRecord) -> tuple[EcgRecord, float]:
    """Keep I, III and V1..V6; also return the max Einthoven residual |I + III - II|."""
    _require(rec, LEADS_12)
    residual = limb_residuals(rec)["II"]
    return EcgRecord({k: rec.leads[k].copy() for k in LEADS_8}, rec.fs, rec.labels, rec.generated), residual
