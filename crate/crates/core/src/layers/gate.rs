use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Module, Parameter, Var};

/// Per-column `leaky_relu(w_i * x_i + b_i)`.
#[derive(Clone, Debug)]
pub struct LeakyGate {
    pub w: Parameter,
    pub b: Parameter,
    pub slope: f64,
}

/// Gate output together with the pre-activation it was computed from.
#[derive(Clone, Copy, Debug)]
pub struct GateOutput<'g> {
    pub pre: Var<'g>,
    pub out: Var<'g>,
}

impl LeakyGate {
    /// Starts fully open: `w = 1`, `b = 0`.
    pub fn new(name: &str, width: usize, slope: f64) -> Self {
        LeakyGate {
            w: Parameter::new(format!("{name}.w"), &[width], vec![1.0; width]),
            b: Parameter::new(format!("{name}.b"), &[width], vec![0.0; width]),
            slope,
        }
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    pub fn forward<'g>(&self, g: &'g Graph, x: Var<'g>) -> Result<Var<'g>> {
        Ok(self.forward_full(g, x)?.out)
    }

    pub fn forward_full<'g>(&self, g: &'g Graph, x: Var<'g>) -> Result<GateOutput<'g>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.width() {
            return Err(Error::shape("leaky_gate", &shape, &[self.width()]));
        }
        let pre = x.mul(&g.param(&self.w))?.add(&g.param(&self.b))?;
        Ok(GateOutput {
            pre,
            out: pre.leaky_relu(self.slope),
        })
    }

    pub fn partition(&self, column: usize) -> Partition {
        gate_partition(self.w.value[column], self.b.value[column])
    }
}

impl Module for LeakyGate {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w, &mut self.b]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Unbounded,
    Open(f64),
    Closed(f64),
}

/// A real interval, possibly empty or unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Interval {
    Empty,
    Range { lo: Bound, hi: Bound },
}

impl Interval {
    pub const ALL: Interval = Interval::Range {
        lo: Bound::Unbounded,
        hi: Bound::Unbounded,
    };

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Interval::Empty => false,
            Interval::Range { lo, hi } => {
                let above = match lo {
                    Bound::Unbounded => true,
                    Bound::Open(a) => x > a,
                    Bound::Closed(a) => x >= a,
                };
                let below = match hi {
                    Bound::Unbounded => true,
                    Bound::Open(a) => x < a,
                    Bound::Closed(a) => x <= a,
                };
                above && below
            }
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interval::Empty => write!(f, "∅"),
            Interval::Range { lo, hi } => {
                match lo {
                    Bound::Unbounded => write!(f, "(-inf, ")?,
                    Bound::Open(a) => write!(f, "({a}, ")?,
                    Bound::Closed(a) => write!(f, "[{a}, ")?,
                }
                match hi {
                    Bound::Unbounded => write!(f, "+inf)"),
                    Bound::Open(a) => write!(f, "{a})"),
                    Bound::Closed(a) => write!(f, "{a}]"),
                }
            }
        }
    }
}

/// Where a gate column lets values pass (`w x + b > 0`) and where they leak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Partition {
    pub pass: Interval,
    pub leak: Interval,
}

/// Splits the real line by the sign of the gate's own arithmetic,
/// `fl(fl(w x) + b)`. That value is monotone in `x`, so the threshold is
/// found by nudging `-b / w` one ulp at a time until it sits exactly on
/// the floating-point boundary.
pub fn gate_partition(w: f64, b: f64) -> Partition {
    use Bound::*;
    let passes = |x: f64| w * x + b > 0.0;
    if w > 0.0 {
        // largest t that does not pass
        let mut t = (-b / w).clamp(f64::MIN, f64::MAX);
        while passes(t) && t > f64::MIN {
            t = t.next_down();
        }
        while !passes(t.next_up()) && t < f64::MAX {
            t = t.next_up();
        }
        let t = t + 0.0; // -0 -> +0
        Partition {
            pass: Interval::Range { lo: Open(t), hi: Unbounded },
            leak: Interval::Range { lo: Unbounded, hi: Closed(t) },
        }
    } else if w < 0.0 {
        // smallest t that does not pass
        let mut t = (-b / w).clamp(f64::MIN, f64::MAX);
        while passes(t) && t < f64::MAX {
            t = t.next_up();
        }
        while !passes(t.next_down()) && t > f64::MIN {
            t = t.next_down();
        }
        let t = t + 0.0;
        Partition {
            pass: Interval::Range { lo: Unbounded, hi: Open(t) },
            leak: Interval::Range { lo: Closed(t), hi: Unbounded },
        }
    } else if b > 0.0 {
        Partition {
            pass: Interval::ALL,
            leak: Interval::Empty,
        }
    } else {
        Partition {
            pass: Interval::Empty,
            leak: Interval::ALL,
        }
    }
}
