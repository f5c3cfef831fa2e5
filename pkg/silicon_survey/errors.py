"""
Exception types raised by the survey simulation harness.
"""


class SurveyError(Exception):
    """
    @brief Root of every error raised on purpose by this package.
    """


class ConfigurationError(SurveyError, ValueError):
    """
    A configuration value is missing, unknown, or rejected by a provider.
    """


class StructuralError(SurveyError, ValueError):
    """
    Inputs do not line up: wrong vector length, index out of range, or mismatched respondent sets.
    """


class AssemblyError(SurveyError):
    """
    A prompt could not be assembled because a required component source is missing.
    """

    def __init__(self, variant_id, kind, message=None):
        self.variant_id = variant_id
        self.kind = kind

        super(AssemblyError, self).__init__(
            message or 'Cannot assemble {}: missing {}'.format(variant_id, kind)
        )


class ManifestError(SurveyError):
    """
    A run manifest violates one of its invariants; raised before any provider call.
    """


class EmptyMatrixError(SurveyError):
    """
    No usable ratings exist for a condition.
    """


class DesignError(SurveyError):
    """
    The observations handed to the ANOVA are not a balanced full cross.
    """


class PartialDataError(SurveyError):
    """
    The run store is missing records the report needs.

    @param gaps The missing run keys.
    """

    def __init__(self, gaps):
        self.gaps = list(gaps)

        super(PartialDataError, self).__init__('Run store is missing {} record(s)'.format(len(self.gaps)))


class ProviderError(SurveyError):
    """
    Base class for failures talking to a completion provider.
    """


class AuthenticationError(ProviderError):
    """
    Credentials are missing or were refused. Never retried.
    """


class TransientError(ProviderError):
    """
    A failure worth retrying: timeouts, throttling, and server-side errors.
    """


class TransportError(ProviderError):
    """
    Retries were exhausted.

    @param attempts Number of attempts made
    @param last_error The last transient error seen
    """

    def __init__(self, attempts, last_error):
        self.attempts = attempts
        self.last_error = last_error

        super(TransportError, self).__init__('Gave up after {} attempt(s): {}'.format(attempts, last_error))


class ContextLengthError(ProviderError):
    """
    The prompt exceeds the model's context window.
    """


class RequestError(ProviderError):
    """
    The provider rejected the request as malformed. Never retried.
    """
