use std::time::Instant;

use super::base_config;
use crate::commands::fit::{DRAWS_FILE, SUMMARY_FILE};
use crate::config::{check_level, SummarizeConfig};
use crate::draws::{is_monitored, summarize_columns, summary_csv, DrawsTable};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, write_file};
use crate::manifest::Manifest;
use crate::SummarizeArgs;

fn resolve(args: &SummarizeArgs) -> CliResult<SummarizeConfig> {
    let mut c: SummarizeConfig = base_config(&args.common, "summarize")?;
    if let Some(v) = &args.fit {
        c.fit = Some(v.clone());
    }
    if let Some(v) = args.level {
        c.level = v;
    }
    if args.all {
        c.all = true;
    }
    if c.fit.is_none() {
        return Err(CliError::usage("no fit directory given (--fit)"));
    }
    check_level(c.level)?;
    Ok(c)
}

pub fn run(args: SummarizeArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = resolve(&args)?;
    let draws_path = config.fit.as_ref().expect("validated").join(DRAWS_FILE);
    let table = DrawsTable::read(&draws_path)?;
    let all = config.all;
    let entries = summarize_columns(&table, config.level, |c| all || is_monitored(c))?;
    let out = &args.common.out;
    ensure_dir(out)?;
    write_file(&out.join(SUMMARY_FILE), &summary_csv(&entries))?;
    let mut manifest = Manifest::new("summarize", &config, None);
    manifest.add_input(&draws_path)?;
    manifest.add_output(out, SUMMARY_FILE)?;
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(out)
}
