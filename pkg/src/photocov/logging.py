import logging

log = logging.getLogger("photocov")
