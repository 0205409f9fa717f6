"""Ascending deferred revelation auction (ADRA) simulator.

Modules: ``distributions`` (value laws, ironing, reserves), ``levels``,
``commitments``, ``protocol`` (message engines for ADRA, APA and the
non-i.i.d. variant), ``fast`` (vectorized honest outcomes), ``adversary``
(fake-bid auctioneer policies and credibility checks), ``experiments`` and
``cli``.
"""

__version__ = "0.1.0"
