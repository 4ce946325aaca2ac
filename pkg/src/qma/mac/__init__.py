"""Channel access schemes: QMA and the two 802.15.4 CSMA/CA baselines."""

from .base import DropReason, MacBase
from .csma import CsmaConstants, CsmaMac
from .qma import QmaConfig, QmaMac

MAC_KINDS = ("qma", "csma_slotted", "csma_unslotted")

__all__ = ["DropReason", "MacBase", "CsmaConstants", "CsmaMac", "QmaConfig", "QmaMac", "MAC_KINDS"]
