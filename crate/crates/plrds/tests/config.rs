use plrds::config::FieldDump;
use plrds::{parse_config, Experiment};
use plrds_core::{NoiseCase, Scheme};

#[test]
fn full_config_parses() {
    let text = "\
# multiplicative run
[problem]
noise_case = multiplicative
alpha = 0.2     ; intensity
period = 2
g_time = sin
[grid]
dim = 2
L = 4
n = 33
[stepper]
dt = 0.002
scheme = explicit
[noise]
seed = 42
dt = 0.001
[experiment]
name = usc-sweep
alphas = [0.3, 0.1]
n_seeds = 3
[output]
directory = out
formats = json
field_dump = binary
";
    let c = parse_config(text).unwrap();
    assert_eq!(c.problem.noise_case, NoiseCase::Multiplicative);
    assert_eq!(c.problem.alpha, 0.2);
    assert_eq!(c.problem.period, Some(2.0));
    assert_eq!((c.grid.dim(), c.grid.n_per_axis()), (2, 33));
    assert_eq!(c.stepper.scheme, Scheme::Explicit);
    assert_eq!(c.experiment.name, Some(Experiment::UscSweep));
    assert_eq!(c.experiment.alphas, vec![0.3, 0.1]);
    assert_eq!(c.seeds(), vec![42, 43, 44]);
    assert!(!c.output.csv && c.output.json);
    assert_eq!(c.output.field_dump, FieldDump::Binary);
}

#[test]
fn case_dependent_alpha_defaults() {
    let alpha = |case: &str| {
        parse_config(&format!("[problem]\nnoise_case = {case}\n"))
            .unwrap()
            .problem
            .alpha
    };
    assert_eq!(alpha("additive"), 0.0625);
    assert_eq!(alpha("multiplicative"), 0.1);
    assert_eq!(alpha("deterministic"), 0.0);
    let c = parse_config("[problem]\nlambda = 2\n").unwrap();
    assert_eq!(c.problem.alpha, 0.125);
}

#[test]
fn errors_carry_line_numbers() {
    let cases = [
        ("[grid]\nn = 2\n", 2, "n"),
        ("[stepper]\n\ndt = -1\n", 3, "dt"),
        ("[noise]\nseed\n", 2, "key = value"),
        ("[experiment]\nhorizons = 4, 2\n", 2, "ascending"),
        ("[experiment]\nname = plot\n", 2, "unknown experiment"),
        ("[output]\nformats = csv, xml\n", 2, "xml"),
        ("[problem]\nnoise_case = colored\n", 2, "noise_case"),
        ("[problem]\np = 1.5\n", 2, "p"),
        ("[grid]\nn =\n", 2, "missing value"),
    ];
    for (text, line, needle) in cases {
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.0[0].line, Some(line), "{text}: {e}");
        assert!(e.0[0].message.contains(needle), "{text}: {e}");
    }
}

#[test]
fn step_must_be_a_multiple_of_the_noise_step() {
    let e = parse_config("[stepper]\ndt = 0.001\n[noise]\ndt = 0.0003\n").unwrap_err();
    assert!(e.to_string().contains("integer multiple"), "{e}");
}
