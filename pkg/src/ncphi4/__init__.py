"""Graph calculus of the quartic scalar model on Moyal space."""
