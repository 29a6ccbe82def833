"""Verification of DRLP properties over feedforward networks."""
