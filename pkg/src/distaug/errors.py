"""Exception hierarchy shared by all distaug modules."""


class DistaugError(Exception):
    """Base class for every error raised by this package."""


# manifest
class MalformedRecord(DistaugError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"malformed record on line {line_no}: {reason}")


class DuplicateId(DistaugError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"duplicate utt_id {utt_id!r}")


class SourceTagMismatch(DistaugError):
    pass


class ScorerFailure(DistaugError):
    def __init__(self, utt_id, cause):
        self.utt_id = utt_id
        super().__init__(f"scorer failed on {utt_id!r}: {cause}")


# dsp
class EmptySignal(DistaugError):
    pass


class NonColaConfig(DistaugError):
    pass


class DimMismatch(DistaugError):
    pass


class FactorOutOfRange(DistaugError):
    pass


class SampleRateMismatch(DistaugError):
    pass


class ZeroPowerInput(DistaugError):
    pass


# roomsim
class InvalidGeometry(DistaugError):
    pass


class EmptyRange(DistaugError):
    pass


# specaug
class PolicyShapeMismatch(DistaugError):
    pass


# nn
class ShapeMismatch(DistaugError):
    pass


class NonFiniteActivation(DistaugError):
    pass


class NoForwardTrace(DistaugError):
    pass


# cyclegan
class CoverageMismatch(DistaugError):
    pass


class BandCountMismatch(DistaugError):
    pass


class EmptyCorpus(DistaugError):
    pass


class DivergenceDetected(DistaugError):
    def __init__(self, step, losses):
        self.step = step
        super().__init__(f"non-finite loss at step {step}: {losses}")


class TooShort(DistaugError):
    pass


# pseudolabel
class EmptyReference(DistaugError):
    pass


# ttsaug
class EngineUnreachable(DistaugError):
    pass


class SynthesisFailed(DistaugError):
    def __init__(self, text, cause=""):
        self.text = text
        super().__init__(f"synthesis failed for {text!r}: {cause}")


# cli
class ConfigInvalid(DistaugError):
    def __init__(self, field, reason):
        self.field = field
        super().__init__(f"{field}: {reason}")


class StageFailed(DistaugError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
