pub mod interval;
pub mod okmodel;
pub mod seqspace;
pub mod spacegroup;
pub mod solver;
pub mod validator;
pub mod energy_cert;
pub mod morse;
pub mod cli;
