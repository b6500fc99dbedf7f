use std::process::ExitCode;

fn main() -> ExitCode {
    println!("acceptance criteria");
    let outcomes = rkhs_validation::run_all(|o| println!("{}", o.line()));
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
