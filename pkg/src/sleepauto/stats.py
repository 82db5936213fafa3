"""
Hypothesis tests used for cohort comparisons and staging agreement: Welch's (or Student's)
independent t-test, the Wilcoxon rank-sum test and descriptive summaries.
"""
import math

import numpy as np
import scipy.special
import scipy.stats

from dataclasses import dataclass
from enum        import Enum
from typing      import Optional, Sequence, Union

from sleepauto.exceptions import EmptySample, SampleTooSmall

# combined sample size up to which the rank-sum null distribution is enumerated
EXACT_RANK_SUM_LIMIT = 20

class Sidedness(Enum):
    ONE = 'one'
    TWO = 'two'

@dataclass(frozen=True)
class TestResult:
    """
    Outcome of a two-sample test. One-sided tests use the alternative "a is greater than b".

    :ivar str        test:       name of the test ("welch", "student" or "wilcoxon")
    :ivar float      statistic:  t statistic, or rank sum of the first sample
    :ivar float      df:         degrees of freedom (None for the rank test)
    :ivar float      p_value:    p-value in [0, 1]
    :ivar Sidedness  sidedness:  one or two-sided
    :ivar bool       degenerate: True if both samples have zero variance
    :ivar bool       exact:      True if the p-value comes from the exact null distribution
    """
    __test__ = False

    test:str
    statistic:float
    df:Optional[float]
    p_value:float
    sidedness:Sidedness
    degenerate:bool = False
    exact:bool      = False

@dataclass(frozen=True)
class Summary:
    """
    Descriptive statistics of a sample (sample SD with n-1, linear-interpolation quartiles).
    A single value has SD 0 and is flagged degenerate.
    """
    mean:float
    sd:float
    q1:float
    median:float
    q3:float
    n:int
    degenerate:bool = False

    def to_dict(self) -> dict:
        return { 'mean': self.mean, 'sd': self.sd, 'q1': self.q1, 'median': self.median, 'q3': self.q3, 'n': self.n, 'degenerate': self.degenerate }

def _sample( x:Sequence[float] ) -> np.ndarray:
    return np.asarray( x, dtype= np.float64 ).ravel()

#region t-distribution

def t_tail( t:float, df:float ) -> float:
    """Returns the upper tail probability P(T > |t|) of Student's t-distribution."""
    if math.isinf( t ):
        return 0.0

    return 0.5 * float( scipy.special.betainc( df / 2.0, 0.5, df / ( df + t * t ) ) )

def t_cdf( t:float, df:float ) -> float:
    """Returns the cumulative distribution function of Student's t-distribution at t."""
    tail = t_tail( t, df )
    return 1.0 - tail if t > 0 else tail

#endregion

#region Tests

def _t_p_value( t:float, df:float, sidedness:Sidedness ) -> float:
    if sidedness is Sidedness.TWO:
        return min( 1.0, 2.0 * t_tail( t, df ) )

    return 1.0 - t_cdf( t, df )

def welch_t_test( a:Sequence[float], b:Sequence[float], sidedness:Union[Sidedness,str]= Sidedness.TWO, equal_var:bool= False ) -> TestResult:
    """
    Independent two-sample t-test, Welch's unequal-variance version by default
    (Student's pooled-variance version with ``equal_var=True``).

    If both samples are constant the result is flagged degenerate: p is 1 for equal means,
    otherwise the statistic is infinite and p is 0 (or 1 for the wrong one-sided direction).

    :param Sequence[float] a:         first sample
    :param Sequence[float] b:         second sample
    :param Sidedness       sidedness: one-sided (a > b) or two-sided alternative
    :param bool            equal_var: pool the variances (Student)

    :raises SampleTooSmall: if a sample has fewer than 2 values
    """
    a, b      = _sample( a ), _sample( b )
    sidedness = Sidedness( sidedness )
    name      = 'student' if equal_var else 'welch'

    if len( a ) < 2 or len( b ) < 2:
        raise SampleTooSmall( f't-test needs at least 2 values per sample, got {len(a)} and {len(b)}' )

    na, nb = len( a ), len( b )
    va, vb = a.var( ddof= 1 ) / na, b.var( ddof= 1 ) / nb
    diff   = a.mean() - b.mean()

    if equal_var:
        pooled = ( ( na - 1 ) * a.var( ddof= 1 ) + ( nb - 1 ) * b.var( ddof= 1 ) ) / ( na + nb - 2 )
        se     = math.sqrt( pooled * ( 1.0 / na + 1.0 / nb ) )
        df     = float( na + nb - 2 )

    else:
        se = math.sqrt( va + vb )
        df = ( va + vb ) ** 2 / ( va ** 2 / ( na - 1 ) + vb ** 2 / ( nb - 1 ) ) if se > 0 else float( na + nb - 2 )

    if se == 0:
        if diff == 0:
            return TestResult( name, 0.0, df, 1.0, sidedness, degenerate= True )

        t = math.copysign( math.inf, diff )
        p = 0.0 if sidedness is Sidedness.TWO or diff > 0 else 1.0
        return TestResult( name, t, df, p, sidedness, degenerate= True )

    t = diff / se
    return TestResult( name, float( t ), float( df ), _t_p_value( t, df, sidedness ), sidedness )

def _rank_sum_distribution( n_a:int, n:int ) -> np.ndarray:
    """
    Returns the number of ways each rank sum arises when ``n_a`` of the ranks 1..n are drawn.
    """
    max_sum = n * ( n + 1 ) // 2
    # counts[k][s]: subsets of size k with sum s among the ranks seen so far
    counts  = np.zeros( ( n_a + 1, max_sum + 1 ), dtype= np.float64 )
    counts[0, 0] = 1

    for rank in range( 1, n + 1 ):
        for k in range( min( rank, n_a ), 0, -1 ):
            counts[k, rank:] += counts[k - 1, :max_sum + 1 - rank]

    return counts[n_a]

def wilcoxon_rank_sum( a:Sequence[float], b:Sequence[float], sidedness:Union[Sidedness,str]= Sidedness.TWO ) -> TestResult:
    """
    Wilcoxon rank-sum test on the rank sum of the first sample (midranks for ties).

    The null distribution is enumerated exactly when the combined size is at most 20 and there
    are no ties; otherwise the normal approximation with tie and continuity correction is used.

    :raises EmptySample: if a sample is empty
    """
    a, b      = _sample( a ), _sample( b )
    sidedness = Sidedness( sidedness )

    if len( a ) == 0 or len( b ) == 0:
        raise EmptySample( f'rank-sum test needs non-empty samples, got {len(a)} and {len(b)}' )

    na, nb = len( a ), len( b )
    n      = na + nb
    ranks  = scipy.stats.rankdata( np.concatenate( [ a, b ] ) )
    w      = float( ranks[:na].sum() )
    ties   = np.unique( ranks, return_counts= True )[1]

    if n <= EXACT_RANK_SUM_LIMIT and np.all( ties == 1 ):
        counts = _rank_sum_distribution( na, n )
        probs  = counts / counts.sum()
        k      = int( round( w ) )
        lower  = probs[:k + 1].sum()
        upper  = probs[k:].sum()
        p      = min( 1.0, 2.0 * min( lower, upper ) ) if sidedness is Sidedness.TWO else upper
        return TestResult( 'wilcoxon', w, None, float( p ), sidedness, exact= True )

    mean = na * ( n + 1 ) / 2.0
    var  = na * nb / 12.0 * ( ( n + 1 ) - float( ( ties ** 3 - ties ).sum() ) / ( n * ( n - 1 ) ) )

    if var <= 0:
        p = 1.0 if sidedness is Sidedness.TWO else 0.5
        return TestResult( 'wilcoxon', w, None, p, sidedness, degenerate= True )

    sd = math.sqrt( var )
    if sidedness is Sidedness.TWO:
        z = max( abs( w - mean ) - 0.5, 0.0 ) / sd
        p = min( 1.0, 2.0 * float( scipy.stats.norm.sf( z ) ) )

    else:
        p = float( scipy.stats.norm.sf( ( w - mean - 0.5 ) / sd ) )

    return TestResult( 'wilcoxon', w, None, p, sidedness )

#endregion

def summarize( sample:Sequence[float] ) -> Summary:
    """
    Returns mean, sample SD and quartiles of the sample.

    :raises EmptySample: if the sample is empty
    """
    x = _sample( sample )
    if len( x ) == 0:
        raise EmptySample( 'cannot summarize an empty sample' )

    q1, median, q3 = np.quantile( x, [ 0.25, 0.5, 0.75 ] )
    sd             = float( x.std( ddof= 1 ) ) if len( x ) > 1 else 0.0

    return Summary( float( x.mean() ), sd, float( q1 ), float( median ), float( q3 ), len( x ), degenerate= len( x ) == 1 )
