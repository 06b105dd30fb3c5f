//! Insertion and deletion curves, and how the choice of evaluation masking
//! decides which explanation scores best.

use removal_explain::eval::{aligned_metric_construction, curve_from_game, CurveDirection, CurveOptions};
use removal_explain::game::TabulatedGame;
use removal_explain::data::MlpConfig;

fn main() -> removal_explain::Result<()> {
    let game = TabulatedGame::new(2, vec![0.0, 1.0, 2.0, 3.0])?;
    for direction in [CurveDirection::Deletion, CurveDirection::Insertion] {
        let curve = curve_from_game(&game, &[1, 0], direction, CurveOptions::default())?;
        println!("{direction:?}: points {:?}, area {:.4}", curve.points, curve.area);
    }

    let report = aligned_metric_construction(&MlpConfig::default())?;
    for e in &report.entries {
        println!(
            "explanation {:<9} masking {:<9} deletion {:.4} (rank {}) insertion {:.4} (rank {})",
            e.explanation, e.masking, e.deletion_area, e.deletion_rank, e.insertion_area, e.insertion_rank
        );
    }
    Ok(())
}
