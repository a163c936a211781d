"""Exception types shared across the pipeline stages."""


class BiotripletsError(Exception):
    """Base class for all library errors."""


# --- document model ---

class EmptyDocument(BiotripletsError):
    """No extractable main title in the page."""


class ParseFailure(BiotripletsError):
    """Input is not HTML at all."""


class SectionNotInDocument(BiotripletsError):
    """Section path lookup for a section that is not in the document tree."""


# --- thesaurus / matcher ---

class FileUnreadable(BiotripletsError):
    pass


class FormatError(BiotripletsError):
    def __init__(self, line_no: int, message: str = "bad thesaurus row"):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDictionary(BiotripletsError):
    """Automaton build requested for an empty thesaurus."""


# --- retrieval ---

class MatchOutOfRange(BiotripletsError):
    pass


class DimensionMismatch(BiotripletsError):
    pass


class ZeroVector(BiotripletsError):
    pass


class EndpointUnavailable(BiotripletsError):
    """Remote endpoint still failing after the retry policy is exhausted."""


class UnknownRelationType(BiotripletsError):
    pass


# --- classifier ---

class EmptyContext(BiotripletsError):
    pass


class ExemplarConfigError(BiotripletsError):
    """Exemplar file missing or not exactly three exemplars per relation."""


# --- evaluation ---

class LengthMismatch(BiotripletsError):
    pass


class MissingPrediction(BiotripletsError):
    def __init__(self, sample_id, model_id):
        super().__init__(f"sample {sample_id} has no prediction for {model_id}")
        self.sample_id = sample_id
        self.model_id = model_id


class MissingReference(BiotripletsError):
    pass


class EmptyMatrix(BiotripletsError):
    pass


# --- cli / config ---

class ConfigError(BiotripletsError):
    pass
