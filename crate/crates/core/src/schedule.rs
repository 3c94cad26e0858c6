//! Piecewise-constant annealing schedules for the random-search attacks.
//!
//! All schedules are defined relative to a reference budget of 10000
//! iterations; for other budgets `N` every breakpoint `j` moves to
//! `floor(j * N / 10000)`, so trajectories are invariant under integer budget
//! rescaling. Wherever a schedule produces an integer quantity, rounding is
//! half-up (`floor(x + 0.5)`).

/// Reference budget the breakpoint tables below are expressed against.
const REFERENCE_BUDGET: u64 = 10_000;

/// Round half-up for non-negative quantities: 7.5 -> 8, 12.49 -> 12.
pub fn round_half_up(x: f64) -> u64 {
    debug_assert!(x >= 0.0, "round_half_up expects non-negative input, got {x}");
    (x + 0.5).floor() as u64
}

/// Rescales a reference-budget breakpoint to budget `n`.
fn rescale(j: u64, n: u64) -> u64 {
    ((u128::from(j) * u128::from(n)) / u128::from(REFERENCE_BUDGET)) as u64
}

// ---------------------------------------------------------------------------
// Element-swap fraction schedule (sparse attacks).
// ---------------------------------------------------------------------------

/// Breakpoints (reference budget) and divisors of the swap-fraction schedule:
/// in the segment starting at iteration `j` the fraction is `alpha_init / b_j`.
const ALPHA_SEGMENT_STARTS: [u64; 9] = [0, 50, 200, 500, 1000, 2000, 4000, 6000, 8000];
const ALPHA_DIVISORS: [f64; 9] = [2.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 15.0, 20.0];

/// The decaying fraction `alpha(i)` of elements resampled per proposal.
#[derive(Debug, Clone)]
pub struct PiecewiseAlphaSchedule {
    alpha_init: f64,
    budget: u64,
    starts: [u64; 9],
}

impl PiecewiseAlphaSchedule {
    pub fn new(alpha_init: f64, budget: u64) -> Self {
        assert!(alpha_init > 0.0, "alpha_init must be positive, got {alpha_init}");
        assert!(budget > 0, "budget must be positive");
        let mut starts = [0u64; 9];
        for (s, &j) in starts.iter_mut().zip(&ALPHA_SEGMENT_STARTS) {
            *s = rescale(j, budget);
        }
        PiecewiseAlphaSchedule { alpha_init, budget, starts }
    }

    /// Fraction at iteration `i` (`0 <= i < budget`).
    pub fn alpha_at(&self, i: u64) -> f64 {
        assert!(i < self.budget, "iteration {i} outside budget {}", self.budget);
        let seg = self.starts.iter().rposition(|&s| i >= s).unwrap_or(0);
        self.alpha_init / ALPHA_DIVISORS[seg]
    }
}

/// How many elements a sparse proposal swaps: `max(1, round(alpha * k))`.
pub fn swap_count(alpha: f64, k: usize) -> usize {
    assert!(alpha > 0.0, "alpha must be positive, got {alpha}");
    (round_half_up(alpha * k as f64) as usize).max(1)
}

/// Choice between the decaying schedule and a constant override (used by
/// schedule ablations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    Decaying { alpha_init: f64 },
    Constant { value: f64 },
}

/// An [`AlphaRule`] bound to a concrete budget.
#[derive(Debug, Clone)]
pub enum AlphaSchedule {
    Piecewise(PiecewiseAlphaSchedule),
    Constant { value: f64, budget: u64 },
}

impl AlphaRule {
    pub fn instantiate(&self, budget: u64) -> AlphaSchedule {
        match *self {
            AlphaRule::Decaying { alpha_init } => {
                AlphaSchedule::Piecewise(PiecewiseAlphaSchedule::new(alpha_init, budget))
            }
            AlphaRule::Constant { value } => {
                assert!(value > 0.0, "constant alpha must be positive, got {value}");
                AlphaSchedule::Constant { value, budget }
            }
        }
    }
}

impl AlphaSchedule {
    pub fn alpha_at(&self, i: u64) -> f64 {
        match self {
            AlphaSchedule::Piecewise(s) => s.alpha_at(i),
            AlphaSchedule::Constant { value, budget } => {
                assert!(i < *budget, "iteration {i} outside budget {budget}");
                *value
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Patch square-side schedule.
// ---------------------------------------------------------------------------

/// Reference-budget iterations at which the patch update area is halved.
const HALVING_STEPS: [u64; 9] = [10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000];

/// Side of the square repainted inside a patch: `round(sqrt(alpha(i)) * s)`
/// clamped to `[1, s]`, with `alpha` halved at each (rescaled) halving step.
#[derive(Debug, Clone)]
pub struct SquareSideSchedule {
    alpha_init: f64,
    patch_side: usize,
    budget: u64,
    halvings: [u64; 9],
}

impl SquareSideSchedule {
    pub fn new(alpha_init: f64, patch_side: usize, budget: u64) -> Self {
        assert!(alpha_init > 0.0, "alpha_init must be positive, got {alpha_init}");
        assert!(patch_side > 0, "patch side must be positive");
        assert!(budget > 0, "budget must be positive");
        let mut halvings = [0u64; 9];
        for (h, &j) in halvings.iter_mut().zip(&HALVING_STEPS) {
            *h = rescale(j, budget);
        }
        SquareSideSchedule { alpha_init, patch_side, budget, halvings }
    }

    fn alpha_at(&self, i: u64) -> f64 {
        assert!(i < self.budget, "iteration {i} outside budget {}", self.budget);
        let halved = self.halvings.iter().filter(|&&h| i >= h).count() as i32;
        self.alpha_init / f64::powi(2.0, halved)
    }

    /// Update-square side at iteration `i`.
    pub fn side_at(&self, i: u64) -> usize {
        let raw = round_half_up(self.alpha_at(i).sqrt() * self.patch_side as f64) as usize;
        raw.clamp(1, self.patch_side)
    }

    /// First iteration whose updates are single pixels, or `budget` if the
    /// side never reaches 1.
    pub fn first_unit_iteration(&self) -> u64 {
        if self.side_at(0) == 1 {
            return 0;
        }
        for &h in &self.halvings {
            if h < self.budget && self.side_at(h) == 1 {
                return h;
            }
        }
        self.budget
    }
}

// ---------------------------------------------------------------------------
// Patch location-shift schedule.
// ---------------------------------------------------------------------------

/// Maximum per-axis location shift, decaying linearly from `0.75 * image_side`
/// at iteration 0 to 0 at the end of the budget.
#[derive(Debug, Clone)]
pub struct LocationRadiusSchedule {
    image_side: usize,
    budget: u64,
}

impl LocationRadiusSchedule {
    pub fn new(image_side: usize, budget: u64) -> Self {
        assert!(image_side > 0 && budget > 0);
        LocationRadiusSchedule { image_side, budget }
    }

    pub fn radius_at(&self, i: u64) -> u64 {
        assert!(i < self.budget, "iteration {i} outside budget {}", self.budget);
        let frac = 1.0 - i as f64 / self.budget as f64;
        round_half_up(0.75 * self.image_side as f64 * frac)
    }
}

// ---------------------------------------------------------------------------
// Frame square-side schedule.
// ---------------------------------------------------------------------------

/// Which frame search the side schedule drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameVariant {
    /// Anchored squares intersected with the frame.
    FrameRs,
    /// Square-attack style updates fully contained in the frame.
    SaInFrame,
}

/// Square side used for frame updates. For the first half of the budget the
/// side shrinks linearly (`FrameRs`: `3 * ceil(a * w^2 * (0.5 - i/N))`;
/// `SaInFrame`: `ceil(a * w * (0.5 - i/N))`); afterwards updates are single
/// pixels.
#[derive(Debug, Clone)]
pub struct FrameSquareSchedule {
    alpha_init: f64,
    frame_width: usize,
    budget: u64,
    variant: FrameVariant,
}

impl FrameSquareSchedule {
    pub fn new(alpha_init: f64, frame_width: usize, budget: u64, variant: FrameVariant) -> Self {
        assert!(alpha_init > 0.0, "alpha_init must be positive, got {alpha_init}");
        assert!(frame_width > 0 && budget > 0);
        FrameSquareSchedule { alpha_init, frame_width, budget, variant }
    }

    pub fn side_at(&self, i: u64) -> usize {
        assert!(i < self.budget, "iteration {i} outside budget {}", self.budget);
        if 2 * i >= self.budget {
            return 1;
        }
        let w = self.frame_width as f64;
        let frac = 0.5 - i as f64 / self.budget as f64;
        let side = match self.variant {
            FrameVariant::FrameRs => 3.0 * (self.alpha_init * w * w * frac).ceil(),
            FrameVariant::SaInFrame => (self.alpha_init * w * frac).ceil(),
        };
        let side = (side as usize).max(1);
        match self.variant {
            // Contained squares can never be wider than the frame band.
            FrameVariant::SaInFrame => side.min(self.frame_width),
            FrameVariant::FrameRs => side,
        }
    }

    /// Iteration from which updates touch a single channel (`FrameRs` only):
    /// the final three quarters of the budget.
    pub fn single_channel_start(&self) -> u64 {
        self.budget.div_ceil(4)
    }
}
