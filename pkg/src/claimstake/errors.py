"""Exception hierarchy for the claimstake package.

Every failure raised by the library derives from ClaimstakeError so callers
(and the CLI) can catch one base class. Subclasses distinguish the failure
domains that the protocol treats differently: a bad signature is not the same
event as a broken hash chain or an undersized committee.
"""


class ClaimstakeError(Exception):
    """Base class for all claimstake failures."""


class ConfigError(ClaimstakeError):
    """Invalid genesis or scenario configuration (duplicates, bad values,
    unparseable config files)."""


class CodecError(ClaimstakeError):
    """Canonical byte encoding could not be decoded."""


class KeyMaterialError(ClaimstakeError):
    """Malformed public or private key material."""


class SignatureError(ClaimstakeError):
    """A signature that must be valid failed verification."""


class AccessError(ClaimstakeError):
    """An identity outside the sealed-envelope recipient set tried to open it."""


class AuthorityError(ClaimstakeError):
    """A node acted in a committee role it does not hold."""


class TamperError(ClaimstakeError):
    """Content integrity check failed (digest mismatch or AEAD failure)."""


class ChainError(ClaimstakeError):
    """Hash-chain linkage or round sequencing violated."""


class TemplateError(ClaimstakeError):
    """Claim template unknown or duplicated."""


class ArtifactError(ClaimstakeError):
    """Artifact bundle unusable (empty, or not valid base64)."""


class DirectoryError(ClaimstakeError):
    """A required public key is missing from the key directory."""


class CommitteeError(ClaimstakeError):
    """Committee construction failed (wrong size, duplicate members)."""


class PoolExhaustedError(CommitteeError):
    """Fewer than the required number of eligible stakers remain."""


class LedgerError(ClaimstakeError):
    """Invalid stake-ledger operation (e.g. slashing an unknown member)."""


class ConsensusError(ClaimstakeError):
    """Attestation set or concurrence rule violated for a block."""


class ParameterError(ClaimstakeError):
    """Risk-model parameters outside their valid domain."""
