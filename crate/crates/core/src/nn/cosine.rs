use crate::error::{shape_err, Error, Result};

fn norms(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(shape_err!("cosine of vectors of length {} and {}", a.len(), b.len()));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let dot = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot, na, nb))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let (dot, na, nb) = norms(a, b)?;
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradients of `upstream * cos(a, b)` with respect to `a` and `b`.
pub fn cosine_similarity_backward(a: &[f64], b: &[f64], upstream: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (dot, na, nb) = norms(a, b)?;
    let s = dot / (na * nb);
    let inv = 1.0 / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(x, y)| upstream * (y * inv - s * x / (na * na)))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(x, y)| upstream * (x * inv - s * y / (nb * nb)))
        .collect();
    Ok((ga, gb))
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::Domain("cannot normalise a zero vector".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}
