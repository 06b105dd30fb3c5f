//! Runs every combination of removal strategy, behavior and summary on one
//! model and reports how far apart the resulting explanations are.

use std::sync::Arc;

use removal_explain::config::Context;
use removal_explain::data::{DiscreteJoint, LinearModel};
use removal_explain::eval::{run_grid, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let joint = DiscreteJoint::from_fn(vec![2, 3], 1, |x, _| if x[0] == x[1] { 2.0 } else { 1.0 })?;
    let data = joint.feature_dataset();
    let ctx = Context {
        model: Some(Arc::new(LinearModel::new(vec![1.0, 0.5], 0.0))),
        dataset: Some(data.clone()),
        background: Some(data),
        joint: Some(joint),
    };
    let spec: GridSpec = serde_json::from_value(serde_json::json!({
        "removals": [
            {"kind": "zeros"},
            {"kind": "marginal", "sampling": {"mode": "exact", "support_cap": 100}},
            {"kind": "conditional_exact"}
        ],
        "behaviors": [{"kind": "prediction", "x": [1, 2]}],
        "summaries": [{"kind": "shapley"}, {"kind": "banzhaf"}]
    }))?;
    let report = run_grid(&spec, &ctx)?;
    for cell in &report.cells {
        println!("{:<40} {:?}", cell.key, cell.values);
    }
    for cmp in &report.comparisons {
        println!("{} distances with {:?} fixed:", cmp.axis, cmp.fixed);
        for (label, row) in cmp.labels.iter().zip(&cmp.matrix) {
            let row: Vec<String> = row.iter().map(|d| d.map_or("-".into(), |d| format!("{d:.3}"))).collect();
            println!("  {label:<28} {}", row.join("  "));
        }
    }
    Ok(())
}
