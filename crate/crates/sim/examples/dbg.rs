use agentsim::engine::{Mode, Params, Program, SimState};
use agentsim::gen::{generate, GenSpec};
fn main() {
    let spec = GenSpec::parse("model=gnp,n=16,p=0.1,k=16,placement=general,seed=6002").unwrap();
    let (g, pl, _) = generate(&spec).unwrap();
    let mut s = SimState::init(g.clone(), &pl, Mode::StabLeKn, Params::default(), true).unwrap();
    for _ in 0..30000u64 { s.step(); }
    for (id, a) in &s.agents {
        if !a.mem.quiet() {
            println!("agent {id} pos={} home={:?} st={:?} eng={} prog={}", a.position, a.mem.home, a.mem.status, a.mem.osc_engaged,
              match &a.mem.program {
                Program::Ge(h) => format!("ge {:?}", h.phase),
                Program::GoHome(gh)=>format!("gohome {:?} bf={:?}", gh.instance.owner, gh.back_first),
                Program::Probe(p)=>format!("probe port={} out={}", p.target_port, p.out),
                Program::Nse(h)=>format!("nse {:?}", h.phase),
                p=>format!("{p:?}") });
        }
        if a.mem.osc.is_some() {
            println!("  osc {id}: {:?}", a.mem.osc);
        }
    }
}
