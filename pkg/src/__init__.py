"""Placement and rebalancing of CEP dataflows across edge devices and cloud VMs."""
