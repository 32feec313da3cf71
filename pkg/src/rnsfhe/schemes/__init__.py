"""Scheme-level APIs: CKKS, BFV (BEHZ multiplication), and BGV."""
