"""
Exception hierarchy for the PA-Bill platform
"""


class PABillError(Exception):
    """Base class for every error raised by the platform"""


class ConfigurationError(PABillError):
    """Invalid parameters: key sizes, counts, prices, config files"""


class EncodingError(PABillError):
    """A plaintext falls outside the signed fixed-point range"""


class KeyMismatchError(PABillError):
    """Ciphertexts or keys from different key pairs were combined"""


class LedgerError(PABillError):
    """Base class for ledger failures"""


class DuplicateEntryError(LedgerError):
    """A (user, cycle, tag) commitment already exists"""


class EquivocationError(DuplicateEntryError):
    """A data producer tried to commit a second value for the same slot"""


class EntryNotFoundError(LedgerError):
    """No commitment exists for the requested key"""


class LedgerPolicyError(LedgerError):
    """A confidential tag was published in plaintext"""


class LedgerFormatError(LedgerError):
    """A persisted ledger line could not be parsed"""

    def __init__(self, message: str, index: int = -1):
        super().__init__(message)
        self.index = index


class ProfileFormatError(PABillError):
    """A profile file could not be parsed"""


class DataValidationError(PABillError):
    """Input data violates a domain rule (e.g. market balance)"""


class DegenerateSurplusError(PABillError):
    """Surplus mode with a zero prosumer total deviation"""


class LifecycleError(PABillError):
    """A billing period operation was invoked in the wrong state"""
