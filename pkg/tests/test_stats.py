import itertools
import math

import numpy  as np
import pytest
import scipy.integrate
import scipy.special
import scipy.stats

from sleepauto.exceptions import EmptySample, SampleTooSmall
from sleepauto.stats      import Sidedness, summarize, t_cdf, welch_t_test, wilcoxon_rank_sum

def _t_cdf_by_quadrature( t:float, df:float ) -> float:
    log_norm = scipy.special.gammaln( ( df + 1 ) / 2 ) - scipy.special.gammaln( df / 2 ) - 0.5 * math.log( df * math.pi )
    density  = lambda x : math.exp( log_norm - ( df + 1 ) / 2 * math.log1p( x * x / df ) )

    return 0.5 + scipy.integrate.quad( density, 0.0, t, epsabs= 1e-14, epsrel= 1e-13, limit= 200 )[0]

#region t-distribution

@pytest.mark.parametrize( 'df', [ 1, 5, 8, 46 ] )
@pytest.mark.parametrize( 't', [ -4.0, -1.0, -0.3, 0.7, 2.5, 6.0 ] )
def test_t_cdf_matches_numerical_integration(t, df):
    assert t_cdf( t, df ) == pytest.approx( _t_cdf_by_quadrature( t, df ), abs= 1e-10 )

@pytest.mark.parametrize( 'df', [ 1, 5, 46 ] )
def test_t_cdf_is_symmetric(df):
    assert t_cdf( 0.0, df ) == pytest.approx( 0.5, abs= 1e-12 )
    for t in np.linspace( 0.1, 8.0, 25 ):
        assert t_cdf( t, df ) + t_cdf( -t, df ) == pytest.approx( 1.0, abs= 1e-12 )

#endregion

#region t-test

def test_identical_samples():
    result = welch_t_test( [ 1.0, 4.0, 2.0 ], [ 1.0, 4.0, 2.0 ] )
    assert result.statistic == 0.0 and result.p_value == pytest.approx( 1.0 )

def test_equal_variance_example():
    result = welch_t_test( [ 1, 2, 3, 4, 5 ], [ 2, 3, 4, 5, 6 ] )

    assert result.statistic == pytest.approx( -1.0 )
    assert result.df == pytest.approx( 8.0 )
    assert result.p_value == pytest.approx( 2 * _t_cdf_by_quadrature( -1.0, 8.0 ), abs= 1e-10 )
    assert result.p_value == pytest.approx( 0.3466, abs= 1e-4 )

def test_welch_matches_scipy(rng):
    a, b   = rng.normal( 0.0, 1.0, 12 ), rng.normal( 0.5, 3.0, 7 )
    result = welch_t_test( a, b )
    other  = scipy.stats.ttest_ind( a, b, equal_var= False )

    assert result.statistic == pytest.approx( other.statistic )
    assert result.p_value == pytest.approx( other.pvalue, abs= 1e-10 )

def test_student_option(rng):
    a, b   = rng.normal( 0.0, 1.0, 10 ), rng.normal( 1.0, 1.0, 14 )
    result = welch_t_test( a, b, equal_var= True )

    assert result.test == 'student' and result.df == 22.0
    assert result.p_value == pytest.approx( scipy.stats.ttest_ind( a, b ).pvalue, abs= 1e-10 )

def test_one_sided_halves_the_tail(rng):
    a, b = rng.normal( 1.0, 1.0, 15 ), rng.normal( 0.0, 1.0, 15 )

    two = welch_t_test( a, b, Sidedness.TWO )
    one = welch_t_test( a, b, 'one' )
    assert one.statistic > 0
    assert one.p_value == pytest.approx( two.p_value / 2, abs= 1e-12 )
    assert welch_t_test( b, a, 'one' ).p_value == pytest.approx( 1 - one.p_value, abs= 1e-12 )

def test_welch_is_affine_invariant(rng):
    a, b = rng.normal( 0.0, 1.0, 9 ), rng.normal( 0.4, 2.0, 11 )
    p    = welch_t_test( a, b ).p_value

    for scale, shift in ( ( 2.0, 0.0 ), ( -0.5, 3.0 ), ( 1000.0, -7.0 ) ):
        assert welch_t_test( scale * a + shift, scale * b + shift ).p_value == pytest.approx( p, abs= 1e-10 )

def test_constant_samples_are_degenerate():
    equal = welch_t_test( [ 2.0, 2.0 ], [ 2.0, 2.0, 2.0 ] )
    assert equal.degenerate and equal.p_value == 1.0

    apart = welch_t_test( [ 3.0, 3.0 ], [ 2.0, 2.0 ] )
    assert apart.degenerate and apart.p_value == 0.0 and math.isinf( apart.statistic )

def test_t_test_needs_two_values():
    with pytest.raises( SampleTooSmall ):
        welch_t_test( [ 1.0 ], [ 1.0, 2.0 ] )

@pytest.mark.slow
def test_rejection_rate_follows_the_noncentral_t():
    rng, n, effect = np.random.default_rng( 99 ), 20, 0.8
    rejected       = np.mean( [ welch_t_test( rng.normal( effect, 1.0, n ), rng.normal( 0.0, 1.0, n ) ).p_value < 0.05 for _ in range( 2000 ) ] )

    df       = 2 * n - 2
    critical = scipy.stats.t.ppf( 0.975, df )
    power    = scipy.stats.nct.sf( critical, df, effect * math.sqrt( n / 2 ) ) + scipy.stats.nct.cdf( -critical, df, effect * math.sqrt( n / 2 ) )
    assert rejected == pytest.approx( power, abs= 0.04 )

#endregion

#region Rank-sum test

def test_exact_rank_sum_example():
    result = wilcoxon_rank_sum( [ 1, 2 ], [ 3, 4 ] )

    assert result.exact and result.statistic == 3.0
    assert result.p_value == pytest.approx( 1 / 3 )

def _enumerated_p( w:float, n_a:int, n:int ) -> float:
    sums  = [ sum( ranks ) for ranks in itertools.combinations( range( 1, n + 1 ), n_a ) ]
    lower = sum( 1 for s in sums if s <= w ) / len( sums )
    upper = sum( 1 for s in sums if s >= w ) / len( sums )

    return min( 1.0, 2 * min( lower, upper ) )

@pytest.mark.parametrize( 'n', range( 2, 9 ) )
def test_exact_p_values_match_enumeration(n):
    values = np.arange( n, dtype= float ) * 1.5 + 0.25

    for n_a in range( 1, n ):
        for chosen in itertools.combinations( range( n ), n_a ):
            a      = values[list( chosen )]
            b      = np.delete( values, list( chosen ) )
            result = wilcoxon_rank_sum( a, b )

            assert result.exact
            assert result.p_value == pytest.approx( _enumerated_p( result.statistic, n_a, n ), abs= 1e-12 )

def test_equal_samples_use_the_approximation():
    result = wilcoxon_rank_sum( [ 1.0, 2.0, 3.0 ], [ 1.0, 2.0, 3.0 ] )
    assert not result.exact and result.p_value == 1.0

def test_all_tied_values():
    result = wilcoxon_rank_sum( [ 5.0, 5.0 ], [ 5.0, 5.0, 5.0 ] )
    assert result.statistic == 5.0 and result.p_value == 1.0

def test_large_samples_match_scipy(rng):
    a, b   = rng.normal( 0.0, 1.0, 25 ), rng.normal( 0.7, 1.0, 23 )
    result = wilcoxon_rank_sum( a, b )

    assert not result.exact
    assert result.p_value == pytest.approx( scipy.stats.mannwhitneyu( a, b, method= 'asymptotic' ).pvalue, rel= 1e-6 )

def test_rank_sum_needs_values():
    with pytest.raises( EmptySample ):
        wilcoxon_rank_sum( [], [ 1.0 ] )

#endregion

#region Summaries

def test_summaries():
    assert summarize( [ 1, 1, 1 ] ).to_dict() == { 'mean': 1.0, 'sd': 0.0, 'q1': 1.0, 'median': 1.0, 'q3': 1.0, 'n': 3, 'degenerate': False }

    spread = summarize( [ 0, 10 ] )
    assert spread.mean == 5.0 and spread.sd == pytest.approx( 7.0710678 )

    single = summarize( [ 4.2 ] )
    assert single.sd == 0.0 and single.degenerate

    with pytest.raises( EmptySample ):
        summarize( [] )

#endregion
