"""Discrete Darboux transformations: multiply the stochastic factors in reverse order."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .blockmat import BlockSequence, multiply_banded

__all__ = ["DarbouxResult", "darboux_from_ul", "darboux_from_lu"]


@dataclass(frozen=True)
class DarbouxResult:
    transformed: BlockSequence
    source: str  # "from_ul" or "from_lu"


def darboux_from_ul(P_U: BlockSequence, P_L: BlockSequence,
                    N: Optional[int] = None) -> DarbouxResult:
    """``P~ = P_L P_U`` from the factors of ``P = P_U P_L``."""
    if P_U.band != "upper" or P_L.band != "lower":
        raise ValueError(f"expected (upper, lower) factors, got ({P_U.band}, {P_L.band})")
    return DarbouxResult(multiply_banded(P_L, P_U, N), "from_ul")


def darboux_from_lu(P_U: BlockSequence, P_L: BlockSequence,
                    N: Optional[int] = None) -> DarbouxResult:
    """``P^ = P~_U P~_L`` from the factors of ``P = P~_L P~_U``.

    The upper factor needs one level beyond ``N`` of the lower one.
    """
    if P_U.band != "upper" or P_L.band != "lower":
        raise ValueError(f"expected (upper, lower) factors, got ({P_U.band}, {P_L.band})")
    return DarbouxResult(multiply_banded(P_U, P_L, N), "from_lu")
