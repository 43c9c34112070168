"""
Trial Emulation v1.0
Estimand-driven external-control survival analysis

Doubly weighted (IPTW x IPCW) survival estimation for comparing a pooled
trial arm against an observational comparator arm under a hypothetical
strategy for subsequent-therapy intercurrent events.
"""

__version__ = "1.0.0"
__author__ = "Trial Emulation Team"
__description__ = "Target-trial emulation with doubly weighted survival estimation"
