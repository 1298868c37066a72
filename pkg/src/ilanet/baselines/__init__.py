"""IRM and LFRM baseline models."""
