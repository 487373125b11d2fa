"""Operator-facing surface: campaign state, HTTP API and the dc1 CLI."""

from dc1sim.svc.campaign import Campaign, CampaignConfig

__all__ = ["Campaign", "CampaignConfig"]
