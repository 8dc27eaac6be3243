class ExtractorError(Exception):
    """Base class for extraction failures."""


class InvalidExtractionConfig(ExtractorError):
    pass


class DetectorUnavailable(ExtractorError):
    pass


class ExtractionFailed(ExtractorError):
    pass
