use std::fs;
use std::path::Path;

use crate::envs::jam::threat_heatmap;
use crate::error::Result;

/// Writes `heatmap_v{v}.csv` for the agent velocity codes 0 (still) through
/// 4 (N, E, S, W): the one-obstacle baseline threat, indexed by the
/// obstacle's offset from the agent.
pub fn write_heatmaps(out: &Path, radius: usize, move_prob: f64, horizon: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    fs::create_dir_all(out)?;
    let mut maps = Vec::with_capacity(5);
    for v in 0..=4 {
        let map = threat_heatmap(v, radius, move_prob, horizon)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(out.join(format!("heatmap_v{v}.csv")))?;
        for row in &map {
            w.write_record(row.iter().map(|x| format!("{x:.6}")))?;
        }
        w.flush()?;
        maps.push(map);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_file_per_velocity() {
        let dir = tempfile::tempdir().unwrap();
        let maps = write_heatmaps(dir.path(), 2, 0.5, 3).unwrap();
        assert_eq!(maps.len(), 5);
        for v in 0..5 {
            let text = fs::read_to_string(dir.path().join(format!("heatmap_v{v}.csv"))).unwrap();
            assert_eq!(text.lines().count(), 5);
            assert!(text.lines().all(|l| l.split(',').count() == 5));
        }
    }
}
