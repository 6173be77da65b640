from contextlib import contextmanager
import logging

PACKAGE_LOGGER = "mqme_dissipation"


class WarningCollector(logging.Handler):
    """
    Keeps the WARNING records of a run as (logger name, message) pairs.
    """

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.records = []

    def emit(self, record):
        self.records.append((record.name, record.getMessage()))

    @property
    def messages(self):
        return [f"{name}: {message}" for name, message in self.records]


class _HoldingHandler(logging.Handler):
    def __init__(self, forward):
        super().__init__()
        self.forward = forward
        self.records = []

    def emit(self, record):
        if record.levelno >= logging.WARNING:
            self.records.append((record.name, record.getMessage()))
            return
        for handler in self.forward:
            if record.levelno >= handler.level:
                handler.handle(record)


@contextmanager
def captured_warnings():
    """
    Hold back the package WARNING records raised inside the block.

    Lower levels still reach the handlers that were active on entry. The held records
    are yielded as a list of (logger name, message) pairs, complete once the block exits,
    so a worker can return them with its result and the parent can replay them in order.
    """
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    handlers, propagate = package_logger.handlers[:], package_logger.propagate
    forward = handlers + (logging.getLogger().handlers if propagate else [])
    holding = _HoldingHandler(forward)
    package_logger.handlers = [holding]
    package_logger.propagate = False
    try:
        yield holding.records
    finally:
        package_logger.handlers = handlers
        package_logger.propagate = propagate


def replay_warnings(records):
    """
    Re-emit held (logger name, message) records through their original loggers.
    """
    for name, message in records:
        logging.getLogger(name).warning("%s", message)
