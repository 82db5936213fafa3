"""
Agreement metrics between annotations: Macro F1 of hypnograms, event-level IoU-F1 with greedy
one-to-one matching, and inter-rater agreement distributions.
"""
import itertools

import numpy as np

from dataclasses import dataclass, field
from enum        import Enum
from typing      import Any, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from sleepauto.exceptions         import EmptyScores, InsufficientRaters, LengthMismatch, NoRecordings, UndefinedAgreement
from sleepauto.elements.events    import TIME_EPS, EventList
from sleepauto.elements.hypnogram import N_STAGES, Hypnogram, Stage
from sleepauto.stats              import Sidedness, Summary, TestResult, summarize, welch_t_test

class AbsentStagePolicy(Enum):
    """Treatment of stages absent from both hypnograms in the Macro F1 average."""
    EXCLUDE = 'exclude'
    ZERO    = 'zero'
    ONE     = 'one'

class AgreementMetric(Enum):
    MACRO_F1 = 'macro_f1'
    IOU_F1   = 'iou_f1'

#region Stage agreement

@dataclass
class StageConfusion:
    """
    Per-stage true positive, false positive and false negative epoch counts of an annotation
    against a reference.

    :ivar np.ndarray tp: true positives per stage
    :ivar np.ndarray fp: false positives per stage
    :ivar np.ndarray fn: false negatives per stage
    """
    tp:np.ndarray
    fp:np.ndarray
    fn:np.ndarray

    def present(self) -> np.ndarray:
        """Returns a mask of the stages occurring in at least one annotation."""
        return ( self.tp + self.fp + self.fn ) > 0

    def f1(self) -> np.ndarray:
        """Returns the per-stage F1 scores (0 where TP is 0, NaN for stages absent from both)."""
        denominator = 2 * self.tp + self.fp + self.fn
        with np.errstate( invalid= 'ignore', divide= 'ignore' ):
            return np.where( denominator > 0, 2 * self.tp / np.maximum( denominator, 1 ), np.nan )

    def to_dict(self) -> Dict[str,Dict[str,float]]:
        scores = self.f1()
        return {
            stage.token : { 'tp': int( self.tp[stage.value] ), 'fp': int( self.fp[stage.value] ), 'fn': int( self.fn[stage.value] ), 'f1': None if np.isnan( scores[stage.value] ) else float( scores[stage.value] ) }
            for stage in Stage
        }

def stage_confusion( a:Hypnogram, b:Hypnogram ) -> StageConfusion:
    """
    Counts per-stage agreement of hypnogram ``a`` against the reference ``b``.

    :raises LengthMismatch: if the hypnograms differ in length
    """
    if len( a ) != len( b ):
        raise LengthMismatch( f'hypnograms of {len(a)} and {len(b)} epochs' )

    matrix = np.zeros( ( N_STAGES, N_STAGES ), dtype= np.int64 )
    np.add.at( matrix, ( a.to_array(), b.to_array() ), 1 )

    tp = np.diag( matrix ).copy()
    return StageConfusion( tp, matrix.sum( axis= 1 ) - tp, matrix.sum( axis= 0 ) - tp )

def macro_f1( a:Hypnogram, b:Hypnogram, absent_policy:Union[AbsentStagePolicy,str]= AbsentStagePolicy.EXCLUDE ) -> float:
    """
    Returns the mean of the per-stage F1 scores of two hypnograms.

    :param Hypnogram         a:             first hypnogram
    :param Hypnogram         b:             second hypnogram
    :param AbsentStagePolicy absent_policy: stages absent from both are excluded, or scored 0 or 1

    :raises LengthMismatch: if the hypnograms differ in length
    """
    absent_policy = AbsentStagePolicy( absent_policy )
    scores        = stage_confusion( a, b ).f1()

    if absent_policy is AbsentStagePolicy.EXCLUDE:
        return float( np.nanmean( scores ) )

    return float( np.nan_to_num( scores, nan= 0.0 if absent_policy is AbsentStagePolicy.ZERO else 1.0 ).mean() )

#endregion

#region Event agreement

@dataclass
class EventMatchResult:
    """
    One-to-one matching of two event lists.

    :ivar List[Tuple[int,int,float]] pairs:       matched ``(index_a, index_b, iou)`` triples
    :ivar List[int]                  unmatched_a: indices of unmatched events of the first list (FP)
    :ivar List[int]                  unmatched_b: indices of unmatched events of the second list (FN)
    """
    pairs:List[Tuple[int,int,float]] = field( default_factory= list )
    unmatched_a:List[int]            = field( default_factory= list )
    unmatched_b:List[int]            = field( default_factory= list )

    @property
    def tp(self) -> int:
        return len( self.pairs )

    @property
    def fp(self) -> int:
        return len( self.unmatched_a )

    @property
    def fn(self) -> int:
        return len( self.unmatched_b )

def interval_iou( start_a:float, end_a:float, start_b:float, end_b:float ) -> float:
    """Returns the overlap of two intervals divided by the span of their union."""
    overlap = min( end_a, end_b ) - max( start_a, start_b )
    if overlap <= 0:
        return 0.0

    return overlap / ( max( end_a, end_b ) - min( start_a, start_b ) )

def match_events( a:EventList, b:EventList, threshold:float= 0.2 ) -> EventMatchResult:
    """
    Matches the events of two lists one-to-one. Overlapping pairs are accepted greedily by
    descending IoU (ties by index), each event at most once; a pair needs IoU above ``threshold``.
    """
    starts_b, ends_b = b.starts, b.ends
    longest_b        = float( b.durations.max() ) if len( b ) > 0 else 0.0

    candidates = []
    for i, event in enumerate( a ):
        lo = int( np.searchsorted( starts_b, event.start_s - longest_b - TIME_EPS, side= 'left' ) )
        hi = int( np.searchsorted( starts_b, event.end_s, side= 'left' ) )

        for j in range( lo, hi ):
            iou = interval_iou( event.start_s, event.end_s, starts_b[j], ends_b[j] )
            if iou > threshold:
                candidates.append( ( -iou, i, j ) )

    candidates.sort()

    used_a, used_b = set(), set()
    pairs          = []
    for negative_iou, i, j in candidates:
        if i in used_a or j in used_b:
            continue

        used_a.add( i )
        used_b.add( j )
        pairs.append( ( i, j, -negative_iou ) )

    pairs.sort()
    return EventMatchResult(
        pairs,
        [ i for i in range( len( a ) ) if i not in used_a ],
        [ j for j in range( len( b ) ) if j not in used_b ]
    )

def pooled_counts( pairs_per_recording:Iterable[Tuple[EventList,EventList]], threshold:float= 0.2 ) -> Tuple[int,int,int]:
    """Returns the TP, FP and FN counts summed over all recordings."""
    tp = fp = fn = 0
    for a, b in pairs_per_recording:
        result  = match_events( a, b, threshold )
        tp     += result.tp
        fp     += result.fp
        fn     += result.fn

    return tp, fp, fn

def iou_f1( pairs_per_recording:Sequence[Tuple[EventList,EventList]], threshold:float= 0.2, strict:bool= False ) -> float:
    """
    Returns ``2TP / (2TP + FP + FN)`` with counts pooled over all recordings.
    If both annotations are empty everywhere the agreement is 1.

    :raises NoRecordings:       if no recording pair is given
    :raises UndefinedAgreement: in strict mode, if both annotations are empty everywhere
    """
    pairs_per_recording = list( pairs_per_recording )
    if len( pairs_per_recording ) == 0:
        raise NoRecordings( 'IoU-F1 needs at least one pair of annotations' )

    tp, fp, fn = pooled_counts( pairs_per_recording, threshold )

    if 2 * tp + fp + fn == 0:
        if strict:
            raise UndefinedAgreement( 'both annotations are empty on every recording' )

        return 1.0

    return 2 * tp / ( 2 * tp + fp + fn )

#endregion

#region Rater distributions

@dataclass(frozen=True)
class PairScore:
    """
    Agreement of two annotators. For hypnograms there is one score per jointly annotated item,
    for events one pooled score per pair (``item`` is None).
    """
    rater_a:str
    rater_b:str
    item:Optional[Hashable]
    n_items:int
    score:float

def _item_score( metric:AgreementMetric, a:Any, b:Any, **options ) -> float:
    if metric is AgreementMetric.MACRO_F1:
        return macro_f1( a, b, options.get( 'absent_policy', AbsentStagePolicy.EXCLUDE ) )

    return iou_f1( [ ( a, b ) ], options.get( 'threshold', 0.2 ), options.get( 'strict', False ) )

def pairwise_agreement_distribution( raters:Mapping[str,Mapping[Hashable,Any]], metric:Union[AgreementMetric,str]= AgreementMetric.MACRO_F1, min_joint_items:int= 5, **options ) -> List[PairScore]:
    """
    Scores every unordered pair of raters on their jointly annotated items.

    :param Mapping raters:          rater -> (item -> hypnogram or event list)
    :param str     metric:          ``macro_f1`` (one score per item) or ``iou_f1`` (pooled over the items)
    :param int     min_joint_items: pairs with fewer joint items are skipped

    Additional keyword arguments (``absent_policy``, ``threshold``, ``strict``) are passed to the metric.

    :raises InsufficientRaters: if fewer than 2 raters are given
    """
    metric = AgreementMetric( metric )
    if len( raters ) < 2:
        raise InsufficientRaters( f'agreement distribution needs at least 2 raters, got {len(raters)}' )

    scores = []
    for rater_a, rater_b in itertools.combinations( sorted( raters ), 2 ):
        joint = sorted( set( raters[rater_a] ) & set( raters[rater_b] ), key= str )
        if len( joint ) < min_joint_items:
            continue

        if metric is AgreementMetric.MACRO_F1:
            for item in joint:
                scores.append( PairScore( rater_a, rater_b, item, 1, _item_score( metric, raters[rater_a][item], raters[rater_b][item], **options ) ) )

        else:
            pairs = [ ( raters[rater_a][item], raters[rater_b][item] ) for item in joint ]
            score = iou_f1( pairs, options.get( 'threshold', 0.2 ), options.get( 'strict', False ) )
            scores.append( PairScore( rater_a, rater_b, None, len( joint ), score ) )

    return scores

def summarize_distribution( scores:Iterable[float] ) -> Summary:
    """
    Returns mean, sample SD and quartiles of the agreement scores.

    :raises EmptyScores: if there is no score
    """
    scores = [ float( score.score if isinstance( score, PairScore ) else score ) for score in scores ]
    if len( scores ) == 0:
        raise EmptyScores( 'no agreement score to summarize' )

    return summarize( scores )

@dataclass(frozen=True)
class RaterComparison:
    """Model-versus-expert scores against the inter-rater scores."""
    model:Summary
    raters:Summary
    test:TestResult

def compare_to_raters( model_scores:Sequence[float], rater_scores:Sequence[float], equal_var:bool= False ) -> RaterComparison:
    """
    Tests whether the model's agreement with the experts exceeds the agreement among the experts
    (one-sided t-test, Welch by default). The score vectors are taken as independent samples.

    :raises EmptyScores: if either score vector is empty
    """
    model  = summarize_distribution( model_scores )
    raters = summarize_distribution( rater_scores )
    test   = welch_t_test( model_scores, rater_scores, Sidedness.ONE, equal_var= equal_var )

    return RaterComparison( model, raters, test )

#endregion
