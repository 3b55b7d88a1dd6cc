"""Exception hierarchy shared by every component."""


class SwteeError(Exception):
    """Base class for all errors raised by this package."""


# crypto / channel
class AuthFailure(SwteeError):
    """Tag mismatch. No plaintext is released."""


class MalformedFrame(SwteeError):
    pass


class ReplayError(SwteeError):
    pass


class EpochMismatch(SwteeError):
    pass


class SequenceExhausted(SwteeError):
    pass


# keys
class DegenerateKey(SwteeError):
    """The DH shared secret was all-zero (low-order peer point)."""


class StaleEpoch(SwteeError):
    pass


class UnsealFailure(SwteeError):
    pass


# protected memory
class ArenaFull(SwteeError):
    pass


class TamperDetected(SwteeError):
    def __init__(self, handle):
        super().__init__(f"integrity check failed for cell {handle}")
        self.handle = handle


class UnknownHandle(SwteeError):
    pass


class JournalMissing(SwteeError):
    pass


class JournalCorrupt(SwteeError):
    pass


# attestation / gateway
class ChallengeAlreadyPending(SwteeError):
    pass


class NoPendingChallenge(SwteeError):
    pass


class DuplicateNode(SwteeError):
    pass


class UnknownNode(SwteeError):
    pass


class NodeNotActive(SwteeError):
    pass


class RenewalFailed(SwteeError):
    pass


class UpdateTimeout(SwteeError):
    pass


# harness
class ScriptError(SwteeError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line
