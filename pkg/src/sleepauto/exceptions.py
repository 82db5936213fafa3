class SleepAutoError(Exception):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

#region Records and annotations

class RecordError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class MalformedHeader(RecordError):
    pass

class InconsistentRecord(RecordError):
    pass

class UnsupportedEncoding(RecordError):
    pass

class InvalidRecord(RecordError):
    pass

class ChannelNotFound(RecordError):
    pass

class UnknownStageToken(RecordError):
    pass

class NegativeDuration(RecordError):
    pass

class UnparsableRow(RecordError):
    pass

class OverlappingEvents(RecordError):
    pass

#endregion

#region Signal processing

class SignalError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class CutoffOutOfRange(SignalError):
    pass

class InvalidOrder(SignalError):
    pass

class EmptyInput(SignalError):
    pass

class IrrationalRatio(SignalError):
    pass

class DegenerateSignal(SignalError):
    pass

class InvalidBounds(SignalError):
    pass

#endregion

#region Staging

class StagingError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class NoEpochs(StagingError):
    pass

class LengthMismatch(StagingError):
    pass

class NonProbabilityRow(StagingError):
    pass

#endregion

#region Segmentation model

class ModelError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class ShapeMismatch(ModelError):
    pass

class UnknownActivation(ModelError):
    pass

class TruncatedTensorData(ModelError):
    pass

class InputTooShort(ModelError):
    pass

#endregion

#region Detection, metrics, characteristics

class DetectionError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class BlockTooShort(DetectionError):
    pass

class MetricError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class EmptyHypnogram(MetricError):
    pass

class NoRecordings(MetricError):
    pass

class InsufficientRaters(MetricError):
    pass

class EmptyScores(MetricError):
    pass

class UndefinedAgreement(MetricError):
    pass

class CharacteristicsError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class NoN2Sleep(CharacteristicsError):
    pass

class TooFewCrossings(CharacteristicsError):
    pass

class EmptySegment(CharacteristicsError):
    pass

class CohortTooSmall(CharacteristicsError):
    pass

#endregion

#region Statistics, synthesis, configuration

class StatisticsError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class SampleTooSmall(StatisticsError):
    pass

class EmptySample(StatisticsError):
    pass

class SynthError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

class InvalidTransitionMatrix(SynthError):
    pass

class InvalidSpec(SynthError):
    pass

class ConfigError(SleepAutoError):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)

#endregion
