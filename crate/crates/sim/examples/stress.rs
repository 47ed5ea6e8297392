use agentsim::engine::{Mode, Params, SimState};
use agentsim::gen::{generate, GenSpec};
use agentsim::verify;

fn main() {
    let mut fails = 0;
    let mut total = 0;
    for n in [8usize, 16, 32] {
        for p in [0.1f64, 0.3, 0.6] {
            for seed in 0..8u64 {
                for (ki, kfrac) in [(0, 4), (1, 2), (2, 1)] {
                    let k = if kfrac == 1 { n } else { (n / kfrac).max(1) };
                    for shape in ["dispersed", "rooted", "general"] {
                        let spec = format!(
                            "model=gnp,n={n},p={p},k={k},placement={shape},seed={}",
                            seed * 1000 + ki
                        );
                        let Ok(spec) = GenSpec::parse(&spec) else { continue };
                        let Ok((g, pl, _)) = generate(&spec) else { continue };
                        let modes: Vec<(Mode, Params)> = {
                            let mut m = vec![(Mode::StabLeKn, Params::default())];
                            m.push((
                                Mode::ExplLeKn,
                                Params { k: Some(k), delta: Some(g.max_degree()), c1: None },
                            ));
                            if k == n {
                                m.push((Mode::ExplLeN, Params::default()));
                            }
                            m
                        };
                        for (mode, params) in modes {
                            total += 1;
                            let mut s =
                                SimState::init(g.clone(), &pl, mode, params, true).unwrap();
                            let r = s.run(400_000);
                            let trace_events: Vec<_> = s.trace.clone().unwrap();
                            let rep = verify::verify(&g, mode, &r, Some(&trace_events));
                            if !rep.pass {
                                fails += 1;
                                println!(
                                    "FAIL n={n} p={p} k={k} {shape} seed={} mode={}:",
                                    seed * 1000 + ki,
                                    mode.name()
                                );
                                for c in rep.checks.iter().filter(|c| !c.pass) {
                                    println!("   {} {}", c.name, c.detail);
                                }
                                println!("   flags={:?} rounds={}", r.flags, r.rounds);
                            }
                        }
                    }
                }
            }
        }
    }
    println!("total={total} fails={fails}");
}
