//! Level costs and refresh placement for stacked residual blocks under a shrinking level budget.

use hcnn::ckks::CkksParams;
use hcnn::graph::{build_graph, gen_fixture, plan_levels, ConvMode, PlanOptions, Topology};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_b();
    let model = gen_fixture(Topology::BasicBlockStack(3), 1, &params.digest_hex(), 0)?;
    let graph = build_graph(&model, params.slots(), ConvMode::Alternating)?;
    let kinds: Vec<_> = graph.layers.iter().map(|l| format!("{}({})", l.node.kind(), l.node.level_cost())).collect();
    println!("{} layers, {} levels in total", graph.layers.len(), graph.total_cost());
    println!("{}", kinds.join(" "));

    for top in [params.max_level(), 12, 9, 7] {
        match plan_levels(&graph, PlanOptions::new(top)) {
            Ok(plan) => {
                let blocked: Vec<_> = (0..graph.layers.len()).filter(|&i| !graph.refresh_allowed(i)).collect();
                println!(
                    "\ntop level {top:>2}: start {}, refresh to {} before layers {:?}",
                    plan.start_level, plan.refresh_target, plan.refresh_points
                );
                println!("  entry levels {:?}", plan.entry_level);
                println!("  no refresh inside residual spans at {blocked:?}");
            }
            Err(e) => println!("\ntop level {top:>2}: {e}"),
        }
    }
    Ok(())
}
