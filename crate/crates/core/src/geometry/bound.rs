use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Maximum number of regions cut out by `n` hyperplanes in general position
/// in `d` dimensions: `Σ_{i=0}^{min(n,d)} C(n, i)`.
pub fn zaslavsky_bound(n: u64, d: u64) -> BigUint {
    let mut total = BigUint::zero();
    let mut binom = BigUint::one();
    for i in 0..=n.min(d) {
        total += &binom;
        // C(n, i+1) = C(n, i) (n - i) / (i + 1), exact at every step
        binom = binom * (n - i) / (i + 1);
    }
    total
}

/// `log10` of a big integer, accurate to roughly 15 significant digits.
pub fn log10_big(v: &BigUint) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    let digits = v.to_str_radix(10);
    let lead: f64 = digits[..digits.len().min(17)].parse().expect("decimal digits");
    lead.log10() + (digits.len() - digits.len().min(17)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn points_on_a_line() {
        assert_eq!(zaslavsky_bound(50, 1), big(51));
    }

    #[test]
    fn three_lines_in_the_plane() {
        assert_eq!(zaslavsky_bound(3, 2), big(7));
    }

    #[test]
    fn full_binomial_sum() {
        for d in 5..9 {
            assert_eq!(zaslavsky_bound(5, d), big(32));
        }
        assert_eq!(zaslavsky_bound(0, 3), big(1));
        assert_eq!(zaslavsky_bound(4, 0), big(1));
    }

    #[test]
    fn large_counts_do_not_overflow() {
        assert_eq!(zaslavsky_bound(200, 200), BigUint::one() << 200usize);
        let r = zaslavsky_bound(500, 100);
        assert!(log10_big(&r) > 100.0);
    }

    #[test]
    fn log10_matches_float_for_small_values() {
        assert!((log10_big(&big(1000)) - 3.0).abs() < 1e-12);
        assert!((log10_big(&big(123_456_789)) - 123_456_789f64.log10()).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn saturates_at_n_and_increases_below(n in 0u64..60, d in 0u64..80) {
            if d >= n {
                proptest::prop_assert_eq!(zaslavsky_bound(n, d), zaslavsky_bound(n, n));
            } else {
                proptest::prop_assert!(zaslavsky_bound(n, d + 1) > zaslavsky_bound(n, d));
            }
        }
    }
}
