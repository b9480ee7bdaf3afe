mod cli;

use std::process::ExitCode;

use clap::Parser;

use cone_test::error::{Error, ErrorClass};
use cone_test::report::{exit_code, to_json_line, ErrorReport};

fn fail(report: ErrorReport) -> ExitCode {
    eprintln!("error: {}", report.error.message);
    println!("{}", to_json_line(&report));
    ExitCode::from(report.error.exit_code as u8)
}

fn main() -> ExitCode {
    let parsed = match cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect::<Vec<_>>()
                .join(" ");
            eprint!("{e}");
            println!("{}", to_json_line(&ErrorReport::new("usage", ErrorClass::Usage, message)));
            return ExitCode::from(exit_code(ErrorClass::Usage) as u8);
        }
    };
    let outcome = cli::thread_count(parsed.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| cli::run(&parsed))
    });
    match outcome {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(ErrorReport::from_error(&e)),
    }
}
