"""Exception types shared across the package.

Each error carries a short machine-readable ``code`` used by the CLI when it
reports a failure on a single line.
"""


class ProjSynthError(Exception):
    code = "error"


class InvalidArgumentError(ProjSynthError, ValueError):
    code = "invalid-argument"


class PreconditionError(ProjSynthError, RuntimeError):
    code = "precondition"


class UnknownPromptError(ProjSynthError, KeyError):
    code = "unknown-prompt"

    def __init__(self, prompt):
        self.prompt = prompt
        super().__init__(f"unknown prompt {prompt!r}")

    def __str__(self):
        return self.args[0]


class ConfigurationError(ProjSynthError):
    code = "configuration"


class IncompatibleCheckpointError(ProjSynthError):
    code = "incompatible-checkpoint"


class FormatError(ProjSynthError, ValueError):
    code = "format"
