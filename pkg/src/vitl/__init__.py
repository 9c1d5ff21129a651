"""VITL: an on-demand virtual-machine lab.

Users request an OS image over HTTP, the scheduler picks a host with a
two-set load-balancing policy, a hypervisor driver provisions a linked
clone, and the lease manager tears it down when time runs out.  The
in-repo driver is a deterministic simulation, which also powers the
turnaround-vs-load experiment harness.
"""

__version__ = "0.1.0"
