//! Writes the canonical vocabulary manifest to stdout.

fn main() {
    print!("{}", xqmimic_core::movespace::enumerate_vocabulary().manifest());
}
