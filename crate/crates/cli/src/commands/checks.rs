use clap::Args;
use serde::Serialize;

use dwa::checks::{cmr_suite, gradient_suite, identity_suite, model_gradient_check, wavelet_suite, CheckOutcome};
use dwa::models::ModelKind;

use crate::common::{write_text, Global};
use crate::error::{CliError, CliResult};

/// 64-bit finite-difference checks of every op, the DWA layer and a model.
#[derive(Args, Debug, Serialize)]
pub struct GradcheckCmd {
    /// Also check every model kind end to end, not just dwsr_dwa
    #[arg(long)]
    pub all_models: bool,
}

/// Wavelet round trip, common-mode rejection and zero-network identity.
#[derive(Args, Debug, Serialize)]
pub struct SelftestCmd {
    /// Random images for the wavelet round-trip suite
    #[arg(long, default_value_t = 1000)]
    pub images: usize,
}

fn report(name: &str, outcomes: &[CheckOutcome], g: &Global) -> CliResult<()> {
    let mut tsv = String::from("status\tcheck\tdetail\n");
    for o in outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status}  {}: {}", o.name, o.detail);
        tsv += &format!("{status}\t{}\t{}\n", o.name, o.detail);
    }
    write_text(&g.path(&format!("{name}.tsv")), &tsv)?;
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    if failed > 0 {
        return Err(CliError::runtime(format!(
            "{name}: {failed} of {} checks failed",
            outcomes.len()
        )));
    }
    println!("{name}: all {} checks passed", outcomes.len());
    Ok(())
}

pub fn gradcheck(cmd: &GradcheckCmd, g: &Global) -> CliResult<()> {
    g.prepare()?;
    g.write_record("gradcheck", cmd)?;
    let mut outcomes = gradient_suite(g.seed);
    if cmd.all_models {
        outcomes.extend(
            ModelKind::ALL
                .into_iter()
                .filter(|&k| k != ModelKind::DwsrDwa)
                .map(|k| model_gradient_check(k, g.seed)),
        );
    }
    report("gradcheck", &outcomes, g)
}

pub fn selftest(cmd: &SelftestCmd, g: &Global) -> CliResult<()> {
    if cmd.images == 0 {
        return Err(CliError::validation("--images must be at least 1"));
    }
    g.prepare()?;
    g.write_record("selftest", cmd)?;
    let outcomes = [
        wavelet_suite(g.seed, cmd.images),
        cmr_suite(g.seed),
        identity_suite(g.seed),
    ]
    .concat();
    report("selftest", &outcomes, g)
}
