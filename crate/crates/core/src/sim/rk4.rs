use std::ops::{Add, Div, Mul};

/// Scalar arithmetic needed by [`rk4_step`]. Implemented for `f64`; tests
/// plug in wider types to look below the f64 round-off floor.
pub trait Scalar:
    Copy + Add<Output = Self> + Mul<Output = Self> + Div<Output = Self> + From<f64>
{
}

impl<T> Scalar for T where T: Copy + Add<Output = T> + Mul<Output = T> + Div<Output = T> + From<f64> {}

fn axpy<T: Scalar, const N: usize>(x: &[T; N], a: T, d: &[T; N]) -> [T; N] {
    std::array::from_fn(|i| x[i] + a * d[i])
}

/// One classical fourth-order Runge-Kutta step of an autonomous system.
/// Any inputs are held constant by the caller over the step.
pub fn rk4_step<T, const N: usize, E>(
    mut f: impl FnMut(&[T; N]) -> Result<[T; N], E>,
    x: &[T; N],
    h: T,
) -> Result<[T; N], E>
where
    T: Scalar,
{
    let two = T::from(2.0);
    let half = h / two;
    let k1 = f(x)?;
    let k2 = f(&axpy(x, half, &k1))?;
    let k3 = f(&axpy(x, half, &k2))?;
    let k4 = f(&axpy(x, h, &k3))?;
    let sixth = h / T::from(6.0);
    Ok(std::array::from_fn(|i| {
        x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i])
    }))
}

/// Advances `x` by `h`. On error, when `max_halvings > 0`, retries the
/// interval as two half steps, recursively. Returns the first error that
/// survives the floor.
pub fn rk4_step_with_retry<const N: usize, E>(
    f: &mut impl FnMut(&[f64; N]) -> Result<[f64; N], E>,
    x: &[f64; N],
    h: f64,
    max_halvings: u32,
) -> Result<[f64; N], E> {
    match rk4_step(&mut *f, x, h) {
        Ok(next) => Ok(next),
        Err(e) if max_halvings == 0 => Err(e),
        Err(_) => {
            let mid = rk4_step_with_retry(f, x, 0.5 * h, max_halvings - 1)?;
            rk4_step_with_retry(f, &mid, 0.5 * h, max_halvings - 1)
        }
    }
}
