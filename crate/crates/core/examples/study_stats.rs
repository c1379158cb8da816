//! Aggregate a small made-up trial table and print the bundled reference table.

use neuromanip::harness::{
    aggregate_trials, read_study_csv, study_aggregate, write_aggregate_csv, StudyData, REFERENCE_AGGREGATES_CSV,
};

const TRIALS: &str = "participant,mass_g,trial,completion_s
p1,100,1,50.0
p1,100,2,51.5
p1,100,3,53.0
p2,100,1,48.0
p2,100,2,49.0
p2,100,3,49.5
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let StudyData::Trials(trials) = read_study_csv(TRIALS.as_bytes())? else { unreachable!("trial header") };
    write_aggregate_csv(std::io::stdout(), &aggregate_trials(&trials)?)?;
    println!();
    let reference = read_study_csv(REFERENCE_AGGREGATES_CSV.as_bytes())?;
    write_aggregate_csv(std::io::stdout(), &study_aggregate(&reference)?)?;
    Ok(())
}
