"""
Shared logger for the sequential pricing lab
"""

import logging

logger = logging.getLogger("seqprice")
