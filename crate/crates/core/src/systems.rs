//! Named and file-backed systems.
//!
//! A system file is JSON:
//!
//! ```json
//! {
//!   "hamiltonian": {"dims": [2], "terms": [{"sites": [0], "block_re": [[1,0],[0,-1]], "block_im": [[0,0],[0,0]]}]},
//!   "observable": {"eigenvalues": [1, -1], "basis_re": [[1,0],[0,1]], "basis_im": [[0,0],[0,0]], "assignment": [0, 1]},
//!   "initial": {"dims": [2], "re": [1, 0], "im": [0, 0]},
//!   "horizon": 1.0
//! }
//! ```
//!
//! `initial` may instead be `{"ensemble": [{"weight": 0.5, "state": {...}}, ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::MonteCarloSystem;
use crate::measurement::{distribution, OutcomeDistribution};
use crate::operators::{exact_propagator, HamiltonianRecord, HamiltonianSum, LocalTerm, ObservableRecord, ObservableSpec};
use crate::oscillator::{OscillatorConfig, OscillatorSystem};
use crate::state::{EnsembleState, MixedOrPure, PureState};
use crate::trotter::{evolve, trotter_step};
use crate::{CMatrix, C64};

pub const BUILTIN_NAMES: [&str; 2] = ["oscillator", "pauli-xz"];

/// Hamiltonian, observable, initial state and horizon.
#[derive(Debug, Clone)]
pub struct QuantumSystem {
    name: String,
    hamiltonian: HamiltonianSum,
    observable: ObservableSpec,
    initial: MixedOrPure,
    horizon: f64,
}

impl QuantumSystem {
    pub fn new(
        name: impl Into<String>,
        hamiltonian: HamiltonianSum,
        observable: ObservableSpec,
        initial: MixedOrPure,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        if observable.dims() != hamiltonian.dims() || initial.dims() != hamiltonian.dims() {
            return Err(Error::Shape(format!(
                "hamiltonian dims {:?}, observable dims {:?}, initial dims {:?}",
                hamiltonian.dims(),
                observable.dims(),
                initial.dims()
            )));
        }
        Ok(Self { name: name.into(), hamiltonian, observable, initial, horizon })
    }

    pub fn hamiltonian(&self) -> &HamiltonianSum {
        &self.hamiltonian
    }

    pub fn observable(&self) -> &ObservableSpec {
        &self.observable
    }

    pub fn initial(&self) -> &MixedOrPure {
        &self.initial
    }

    pub fn exact_final_state(&self) -> Result<MixedOrPure> {
        let u = exact_propagator(&self.hamiltonian, self.horizon)?;
        self.initial.try_map(|s| u.apply(s))
    }

    pub fn trotterized_final_state(&self, m: usize) -> Result<MixedOrPure> {
        if m == 0 {
            return Err(Error::Validation("step count must be at least 1".into()));
        }
        let step = trotter_step(&self.hamiltonian, self.horizon / m as f64)?;
        self.initial.try_map(|s| Ok(evolve(s, &step, m)?.final_state))
    }

    pub fn to_file(&self) -> SystemFile {
        SystemFile {
            hamiltonian: self.hamiltonian.to_record(),
            observable: self.observable.to_record(),
            initial: match &self.initial {
                MixedOrPure::Pure(s) => InitialRecord::Pure(s.clone()),
                MixedOrPure::Ensemble(e) => InitialRecord::Ensemble {
                    ensemble: e
                        .components()
                        .iter()
                        .map(|(w, s)| EnsembleEntry { weight: *w, state: s.clone() })
                        .collect(),
                },
            },
            horizon: self.horizon,
        }
    }
}

impl MonteCarloSystem for QuantumSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn exact_distribution(&self) -> Result<OutcomeDistribution> {
        distribution(&self.observable, self.exact_final_state()?.as_ref())
    }

    fn simulated_distribution(&self, steps: usize) -> Result<OutcomeDistribution> {
        distribution(&self.observable, self.trotterized_final_state(steps)?.as_ref())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub weight: f64,
    pub state: PureState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialRecord {
    Ensemble { ensemble: Vec<EnsembleEntry> },
    Pure(PureState),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub hamiltonian: HamiltonianRecord,
    pub observable: ObservableRecord,
    pub initial: InitialRecord,
    pub horizon: f64,
}

impl SystemFile {
    pub fn into_system(self, name: impl Into<String>) -> Result<QuantumSystem> {
        let hamiltonian = HamiltonianSum::from_record(self.hamiltonian)?;
        let mut observable = self.observable;
        if observable.dims.is_none() {
            observable.dims = Some(hamiltonian.dims().to_vec());
        }
        let observable = ObservableSpec::from_record(observable)?;
        let initial = match self.initial {
            InitialRecord::Pure(s) => MixedOrPure::Pure(s),
            InitialRecord::Ensemble { ensemble } => MixedOrPure::Ensemble(EnsembleState::new(
                ensemble.into_iter().map(|e| (e.weight, e.state)).collect(),
            )?),
        };
        QuantumSystem::new(name, hamiltonian, observable, initial, self.horizon)
    }
}

/// `H = Z + X` on one qubit, `X_obs = Z`, `|0⟩`, `T = 1`.
pub fn pauli_xz() -> QuantumSystem {
    let c = |re: f64| C64::new(re, 0.0);
    let z = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
    let x = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
    let h = HamiltonianSum::new(
        vec![2],
        vec![LocalTerm::new(vec![0], z).expect("Z is Hermitian"), LocalTerm::new(vec![0], x).expect("X is Hermitian")],
    )
    .expect("valid fixture");
    let obs = ObservableSpec::diagonal(vec![2], &[1.0, -1.0]).expect("valid fixture");
    let initial = MixedOrPure::Pure(PureState::basis(vec![2], 0).expect("valid fixture"));
    QuantumSystem::new("pauli-xz", h, obs, initial, 1.0).expect("valid fixture")
}

/// A system resolved from a builtin name or a JSON file path.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum System {
    Oscillator(Box<OscillatorSystem>),
    General(QuantumSystem),
}

impl System {
    pub fn builtin(name: &str) -> Option<Result<Self>> {
        match name {
            "oscillator" => Some(OscillatorSystem::new(OscillatorConfig::default()).map(|s| System::Oscillator(Box::new(s)))),
            "pauli-xz" => Some(Ok(System::General(pauli_xz()))),
            _ => None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SystemFile = serde_json::from_str(&text)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file").to_string();
        Ok(System::General(file.into_system(name)?))
    }

    /// Builtin name first, then a file path.
    pub fn resolve(source: &str) -> Result<Self> {
        match Self::builtin(source) {
            Some(s) => s,
            None => {
                let path = Path::new(source);
                if !path.exists() {
                    return Err(Error::Validation(format!(
                        "system '{source}' is neither a builtin ({}) nor an existing file",
                        BUILTIN_NAMES.join(", ")
                    )));
                }
                Self::from_file(path)
            }
        }
    }

    pub fn monte_carlo(&self) -> &dyn MonteCarloSystem {
        match self {
            System::Oscillator(s) => s.as_ref(),
            System::General(s) => s,
        }
    }

    /// The decomposition the product formula splits.
    pub fn split_hamiltonian(&self) -> &HamiltonianSum {
        match self {
            System::Oscillator(s) => s.split_hamiltonian(),
            System::General(s) => s.hamiltonian(),
        }
    }

    /// The same operator in the form used for exact propagation.
    pub fn exact_hamiltonian(&self) -> &HamiltonianSum {
        match self {
            System::Oscillator(s) => s.hamiltonian(),
            System::General(s) => s.hamiltonian(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::true_value;
    use crate::operators::fixtures::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pauli_xz_closed_form() {
        // Bloch vector precesses about n = (1, 0, 1)/√2 at rate 2√2
        let sys = pauli_xz();
        let expected = 0.5 + 0.5 * (2.0 * 2f64.sqrt()).cos();
        assert!((true_value(&sys).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_observable_gives_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = HamiltonianSum::new(vec![2, 2], vec![LocalTerm::new(vec![0, 1], random_hermitian(&mut rng, 4)).unwrap()])
            .unwrap();
        let obs = ObservableSpec::diagonal(vec![2, 2], &[1.0; 4]).unwrap();
        let sys =
            QuantumSystem::new("id", h, obs, MixedOrPure::Pure(random_state(&mut rng, vec![2, 2])), 0.7).unwrap();
        assert!((true_value(&sys).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_system_matches_dense_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = vec![2, 2, 2];
        let terms = vec![
            LocalTerm::new(vec![0, 1], random_hermitian(&mut rng, 4)).unwrap(),
            LocalTerm::new(vec![1, 2], random_hermitian(&mut rng, 4)).unwrap(),
        ];
        let h = HamiltonianSum::new(dims.clone(), terms).unwrap();
        let xm = random_hermitian(&mut rng, 8);
        let obs = ObservableSpec::from_hermitian(dims.clone(), &xm).unwrap();
        let psi = random_state(&mut rng, dims.clone());
        let t = 0.9;
        let sys = QuantumSystem::new("r", h.clone(), obs, MixedOrPure::Pure(psi.clone()), t).unwrap();
        // ρ(T) = U ρ U† and θ = tr(Xρ), all dense
        let u = {
            let hd = h.to_dense().unwrap();
            let eig = nalgebra::SymmetricEigen::new(hd);
            let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
            &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
        };
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let rho = &u * &v * (&u * &v).adjoint();
        let theta = (&xm * rho).trace().re;
        assert!((true_value(&sys).unwrap() - theta).abs() < 1e-10);
    }

    #[test]
    fn commuting_system_has_no_bias() {
        let h = HamiltonianSum::new(
            vec![2, 2],
            vec![LocalTerm::new(vec![0], pauli_z()).unwrap(), LocalTerm::new(vec![1], pauli_x()).unwrap()],
        )
        .unwrap();
        let obs = ObservableSpec::from_hermitian(vec![2, 2], &crate::operators::embed_block(&[1], &pauli_z(), &[2, 2]).unwrap()).unwrap();
        let init = MixedOrPure::Pure(PureState::basis(vec![2, 2], 0).unwrap());
        let sys = QuantumSystem::new("c", h, obs, init, 1.0).unwrap();
        let theta = true_value(&sys).unwrap();
        for m in [1, 3, 10] {
            assert!((sys.simulated_distribution(m).unwrap().mean() - theta).abs() < 1e-10);
        }
    }

    #[test]
    fn file_round_trip_with_ensemble() {
        let sys = pauli_xz();
        let mut file = sys.to_file();
        let plus = PureState::normalized(vec![2], vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        file.initial = InitialRecord::Ensemble {
            ensemble: vec![
                EnsembleEntry { weight: 0.25, state: PureState::basis(vec![2], 0).unwrap() },
                EnsembleEntry { weight: 0.75, state: plus },
            ],
        };
        let text = serde_json::to_string(&file).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.json");
        std::fs::write(&path, text).unwrap();
        let loaded = System::resolve(path.to_str().unwrap()).unwrap();
        let theta = true_value(loaded.monte_carlo()).unwrap();
        let pure = true_value(&sys).unwrap();
        let plus_sys = QuantumSystem::new(
            "p",
            sys.hamiltonian().clone(),
            sys.observable().clone(),
            MixedOrPure::Pure(PureState::normalized(vec![2], vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap()),
            1.0,
        )
        .unwrap();
        let expected = 0.25 * pure + 0.75 * true_value(&plus_sys).unwrap();
        assert!((theta - expected).abs() < 1e-12);
        assert_eq!(loaded.monte_carlo().name(), "mixed");
    }

    #[test]
    fn resolve_errors() {
        assert!(matches!(System::resolve("no-such-system"), Err(Error::Validation(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"horizon": 1.0}"#).unwrap();
        assert!(matches!(System::resolve(path.to_str().unwrap()), Err(Error::Json(_))));
        assert!(System::builtin("oscillator").unwrap().is_ok());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let sys = pauli_xz();
        let obs = ObservableSpec::diagonal(vec![4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(QuantumSystem::new("x", sys.hamiltonian().clone(), obs, sys.initial().clone(), 1.0).is_err());
    }
}
