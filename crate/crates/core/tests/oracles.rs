mod common;

use common::*;

#[test]
fn oracle_self_checks() {
    // three lines in general position cut the plane into 7 cells
    let a = Arrangement {
        d: 2,
        normals: vec![vec![1, 0], vec![0, 1], vec![1, 1]],
        offsets: vec![0, 0, 1],
    };
    assert!(a.is_generic());
    assert_eq!(a.count_regions(), 7);
    // concurrent lines are not generic and give 6
    let b = Arrangement {
        offsets: vec![0, 0, 0],
        ..a
    };
    assert!(!b.is_generic());
    assert_eq!(b.count_regions(), 6);
    assert_eq!(small_bound(3, 2), 7);
}
