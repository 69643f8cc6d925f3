//! Finite-difference velocity and acceleration from sampled 2D positions.
//!
//! Central differences on nonuniform timestamps, one-sided at the ends.
//! Constant-velocity motion reproduces its velocity exactly and gets zero
//! acceleration.

/// Per-sample planar velocity. Fewer than 2 samples give zeros.
pub fn velocities(times: &[f64], xy: &[[f64; 2]]) -> Vec<[f64; 2]> {
    assert_eq!(times.len(), xy.len());
    let n = times.len();
    if n < 2 {
        return vec![[0.0, 0.0]; n];
    }
    let slope = |i: usize, j: usize| {
        let dt = times[j] - times[i];
        [(xy[j][0] - xy[i][0]) / dt, (xy[j][1] - xy[i][1]) / dt]
    };
    (0..n)
        .map(|i| {
            if i == 0 {
                slope(0, 1)
            } else if i == n - 1 {
                slope(n - 2, n - 1)
            } else {
                slope(i - 1, i + 1)
            }
        })
        .collect()
}

/// Per-sample planar acceleration via the nonuniform three-point second
/// difference. Endpoints copy the nearest interior value; fewer than 3
/// samples give zeros.
pub fn accelerations(times: &[f64], xy: &[[f64; 2]]) -> Vec<[f64; 2]> {
    assert_eq!(times.len(), xy.len());
    let n = times.len();
    if n < 3 {
        return vec![[0.0, 0.0]; n];
    }
    let second = |i: usize| {
        let h1 = times[i] - times[i - 1];
        let h2 = times[i + 1] - times[i];
        let f = 2.0 / (h1 + h2);
        [
            f * ((xy[i + 1][0] - xy[i][0]) / h2 - (xy[i][0] - xy[i - 1][0]) / h1),
            f * ((xy[i + 1][1] - xy[i][1]) / h2 - (xy[i][1] - xy[i - 1][1]) / h1),
        ]
    };
    (0..n)
        .map(|i| second(i.clamp(1, n - 2)))
        .collect()
}
