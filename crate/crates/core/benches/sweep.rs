use criterion::{criterion_group, criterion_main, Criterion};
use trisopt::bench::{run_single, RunConfig, RunOptions, Scheme};
use trisopt::par::Execution;

const CONFIG: &str = "
users = 2
ris_elements = 8
user_antennas = 2
num_seeds = 8
";

fn seeds_fan_out(c: &mut Criterion) {
    let config = RunConfig::from_toml_str(CONFIG).expect("bench config parses");
    let mut group = c.benchmark_group("single_8_seeds");
    group.sample_size(10);
    for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        let options = RunOptions {
            schemes: vec![Scheme::Proposed, Scheme::EqualPower],
            execution,
        };
        group.bench_function(name, |b| b.iter(|| run_single(&config, &options).expect("run succeeds")));
    }
    group.finish();
}

criterion_group!(benches, seeds_fan_out);
criterion_main!(benches);
