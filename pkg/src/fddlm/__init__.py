"""Block preconditioners and geometric multigrid for a fictitious-domain
elliptic interface problem with distributed Lagrange multipliers."""

__version__ = "0.1.0"
