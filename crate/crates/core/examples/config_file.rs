//! Loads a TOML run config and trains the toy policy it describes.

use tvr_core::config::RunConfig;
use tvr_core::generate_dataset;
use tvr_core::grpo::run_training;

const CONFIG: &str = r#"
[generate]
count = 3
object_count_range = [2, 2]
length_weights = [1.0, 1.0, 0.0, 0.0]
seed = 11

[reward]
variant = "wo_attr"

[grpo]
iterations = 300
eval_interval = 50
learning_rate = 0.1
"#;

fn main() {
    let cfg = RunConfig::from_toml_str(CONFIG).unwrap();
    let data = generate_dataset(&cfg.gen_spec()).unwrap();
    let trace = run_training(&data, &cfg.reward, &cfg.grpo, &cfg.vocab).unwrap();
    print!("{}", trace.to_csv());
}
