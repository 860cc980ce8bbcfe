mod common;

#[test]
fn offline_settlement_matches_online_oracle_for_solvent_customers() {
    common::oracle_check(2024, 1000).unwrap();
}
