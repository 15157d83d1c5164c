pub mod cuts;
pub mod lp;
pub mod lshaped;
pub mod master_bnc;
pub mod model;
pub mod oracle;
pub mod scenario_selection;
pub mod second_stage;
pub mod two_stage;
