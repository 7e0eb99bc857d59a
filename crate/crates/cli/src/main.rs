use std::process::ExitCode;

fn main() -> ExitCode {
    let result = unconv_cli::parse_args(std::env::args_os()).and_then(unconv_cli::run);
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string(&outcome).expect("serializable outcome"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
