use crate::error::{Error, Result};

/// Seasonal-naive forecast: each step repeats the value one season earlier.
pub fn seasonal_naive(history: &[f64], season: usize, h: usize) -> Result<Vec<f64>> {
    if season == 0 {
        return Err(Error::InvalidParameter("season must be >= 1".into()));
    }
    if history.len() < season {
        return Err(Error::InsufficientHistory {
            needed: season,
            have: history.len(),
        });
    }
    let last_season = &history[history.len() - season..];
    Ok((0..h).map(|j| last_season[j % season]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(seasonal_naive(&[1.0, 5.0], 2, 2).unwrap(), vec![1.0, 5.0]);
        assert_eq!(
            seasonal_naive(&[9.0, 1.0, 5.0], 2, 5).unwrap(),
            vec![1.0, 5.0, 1.0, 5.0, 1.0]
        );
        let mut hist = vec![0.0; 30];
        hist[30 - 24] = 4.25;
        assert_eq!(seasonal_naive(&hist, 24, 1).unwrap(), vec![4.25]);
        assert!(matches!(
            seasonal_naive(&[1.0; 23], 24, 1),
            Err(Error::InsufficientHistory {
                needed: 24,
                have: 23
            })
        ));
    }

    #[test]
    fn periodic_series_is_exact() {
        let x: Vec<f64> = (0..96).map(|t| ((t % 24) as f64).sqrt()).collect();
        let f = seasonal_naive(&x[..72], 24, 24).unwrap();
        assert_eq!(f, x[72..].to_vec());
    }
}
