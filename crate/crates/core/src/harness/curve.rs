//! Success rate as a function of spent queries.

use super::suite::ImageRow;

/// One sampled point: after `queries` queries, `rate` of the initially
/// correct images had already been broken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub queries: u64,
    pub rate: f64,
}

/// Evaluates the cumulative success rate over `grid`.
///
/// Only initially correct images enter the denominator; an image counts as
/// broken at `q` when its first success query is at most `q`. With no
/// attacked images at all the rate is reported as zero everywhere.
pub fn success_curve(rows: &[ImageRow], grid: &[u64]) -> Vec<CurvePoint> {
    let attacked: Vec<&ImageRow> = rows.iter().filter(|r| r.initially_correct).collect();
    grid.iter()
        .map(|&q| {
            let rate = if attacked.is_empty() {
                0.0
            } else {
                let broken = attacked
                    .iter()
                    .filter(|r| r.success_query.is_some_and(|s| s <= q))
                    .count();
                broken as f64 / attacked.len() as f64
            };
            CurvePoint { queries: q, rate }
        })
        .collect()
}

/// An inclusive, evenly spaced grid `0..=budget` with about `points` samples.
pub fn query_grid(budget: u64, points: usize) -> Vec<u64> {
    assert!(points >= 2, "a grid needs at least two points");
    let step = (budget / (points as u64 - 1)).max(1);
    let mut grid: Vec<u64> = (0..=budget).step_by(step as usize).collect();
    if *grid.last().unwrap() != budget {
        grid.push(budget);
    }
    grid
}

/// Writes a curve as `queries,success_rate` CSV.
pub fn write_curve_csv(curve: &[CurvePoint], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "queries,success_rate")?;
    for point in curve {
        writeln!(out, "{},{}", point.queries, point.rate)?;
    }
    Ok(())
}
