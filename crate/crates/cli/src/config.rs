//! Experiment configuration: one TOML file, every field defaulted, unknown
//! keys rejected. See `docs/config.md` for the schema.

use std::path::Path;

use kljn_core::attacks::{AttackKind, CouplerSpec};
use kljn_core::circuits::{Bit, LoopConfig};
use kljn_core::protocol::{BrConfig, DefenseConfig, RandomWalkConfig, TransientMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    KljnIdeal,
    KljnWire,
    KljnInjection,
    KljnCoupler,
    KljnTransient,
    BrIdeal,
    BrDamped,
    BrWireJohnson,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::KljnIdeal,
        Scenario::KljnWire,
        Scenario::KljnInjection,
        Scenario::KljnCoupler,
        Scenario::KljnTransient,
        Scenario::BrIdeal,
        Scenario::BrDamped,
        Scenario::BrWireJohnson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::KljnIdeal => "kljn_ideal",
            Scenario::KljnWire => "kljn_wire",
            Scenario::KljnInjection => "kljn_injection",
            Scenario::KljnCoupler => "kljn_coupler",
            Scenario::KljnTransient => "kljn_transient",
            Scenario::BrIdeal => "br_ideal",
            Scenario::BrDamped => "br_damped",
            Scenario::BrWireJohnson => "br_wire_johnson",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::KljnIdeal => "ideal KLJN loop; the BR statistics and the wire attack as null checks",
            Scenario::KljnWire => "KLJN with series wire resistance; wire-resistance attack, optional leak cap",
            Scenario::KljnInjection => "KLJN under midpoint current injection; injection attack and comparison defense",
            Scenario::KljnCoupler => "KLJN observed through a lumped directional coupler",
            Scenario::KljnTransient => "KLJN switching transients, abrupt or random-walk resistors",
            Scenario::BrIdeal => "battery/switch exchanger on a lossless line; six energy-flow attacks",
            Scenario::BrDamped => "battery/switch exchanger with matched noisy damping; energy-flow and damping attacks",
            Scenario::BrWireJohnson => "battery/switch exchanger on a resistive line; energy-flow and wire Johnson attacks",
        }
    }

    pub fn is_br(self) -> bool {
        matches!(self, Scenario::BrIdeal | Scenario::BrDamped | Scenario::BrWireJohnson)
    }

    /// Attacks the scenario evaluates when none are selected.
    pub fn default_attacks(self) -> Vec<AttackKind> {
        let mut ten: Vec<AttackKind> = AttackKind::ENERGY_FLOW.to_vec();
        ten.extend(AttackKind::DAMPING);
        ten.push(AttackKind::WireJohnson);
        match self {
            Scenario::KljnIdeal => {
                ten.push(AttackKind::WireResistance);
                ten
            }
            Scenario::KljnWire => {
                let mut v = vec![AttackKind::WireResistance];
                v.extend(ten);
                v
            }
            Scenario::KljnInjection => vec![AttackKind::CurrentInjection],
            Scenario::KljnCoupler => vec![AttackKind::Coupler],
            Scenario::KljnTransient => vec![AttackKind::Transient],
            Scenario::BrIdeal => AttackKind::ENERGY_FLOW.to_vec(),
            Scenario::BrDamped => {
                let mut v = AttackKind::ENERGY_FLOW.to_vec();
                v.extend(AttackKind::DAMPING);
                v
            }
            Scenario::BrWireJohnson => {
                let mut v = AttackKind::ENERGY_FLOW.to_vec();
                v.push(AttackKind::WireJohnson);
                v
            }
        }
    }

    fn default_br(self) -> Option<BrConfig> {
        match self {
            Scenario::BrIdeal => Some(BrConfig::ideal()),
            Scenario::BrDamped => Some(BrConfig::damped()),
            Scenario::BrWireJohnson => Some(BrConfig::wire_johnson()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KljnSection {
    pub r_l: f64,
    pub r_h: f64,
    pub t_eff: f64,
    /// Noise bandwidth Δf (Hz).
    pub bandwidth: f64,
    /// BEP duration τ (s).
    pub tau: f64,
    pub r_wire: f64,
    pub t_wire: f64,
}

impl Default for KljnSection {
    fn default() -> Self {
        KljnSection { r_l: 1e3, r_h: 9e3, t_eff: 8e8, bandwidth: 500.0, tau: 0.1, r_wire: 0.0, t_wire: 0.0 }
    }
}

impl KljnSection {
    /// Loop configuration with placeholder bits; each BEP sets its own.
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            r_wire: self.r_wire,
            t_wire: self.t_wire,
            ..LoopConfig::new(self.r_l, self.r_h, Bit::L, Bit::H, self.t_eff, self.bandwidth)
        }
    }

    /// Independent samples per BEP, `2 Δf τ`.
    pub fn samples(&self) -> f64 {
        2.0 * self.bandwidth * self.tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSection {
    pub comparison_resolution_bits: u32,
    pub leak_cap: Option<f64>,
    pub transient_mode: TransientMode,
}

impl Default for DefenseSection {
    fn default() -> Self {
        let d = DefenseConfig::default();
        DefenseSection {
            comparison_resolution_bits: d.comparison_resolution_bits,
            leak_cap: d.leak_cap,
            transient_mode: d.transient_mode,
        }
    }
}

impl DefenseSection {
    pub fn to_core(&self) -> DefenseConfig {
        DefenseConfig {
            comparison_resolution_bits: self.comparison_resolution_bits,
            leak_cap: self.leak_cap,
            transient_mode: self.transient_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionSection {
    /// Injected RMS current relative to the channel's RMS current.
    pub sigma: f64,
}

impl Default for InjectionSection {
    fn default() -> Self {
        InjectionSection { sigma: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    /// RMS resistance speed (Ω/s).
    pub v_rms: f64,
    /// Allowed walk time as a multiple of the expected arrival time.
    pub margin: f64,
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection { v_rms: 1.2e7, margin: 3.0 }
    }
}

impl WalkSection {
    pub fn to_core(&self, kljn: &KljnSection) -> RandomWalkConfig {
        RandomWalkConfig::for_speed(self.v_rms, self.margin, kljn.r_l, kljn.r_h, kljn.bandwidth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecuritySection {
    /// Advantage used by `report-security` when no campaign supplies one.
    pub q: f64,
    pub key_lengths: Vec<u64>,
    pub epsilon: f64,
    pub pa_rounds: u32,
}

impl Default for SecuritySection {
    fn default() -> Self {
        SecuritySection { q: 0.05, key_lengths: vec![500, 1000], epsilon: 1e-300, pa_rounds: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Wire resistance as a fraction of `R_L + R_H`.
    RWireFraction,
    RWire,
    Sigma,
    KappaRef,
    VRms,
    Tau,
    /// Independent samples per BEP; sets `τ = s / (2 Δf)`.
    Samples,
    RH,
    LeakCap,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RWireFraction => "r_wire_fraction",
            SweepParameter::RWire => "r_wire",
            SweepParameter::Sigma => "sigma",
            SweepParameter::KappaRef => "kappa_ref",
            SweepParameter::VRms => "v_rms",
            SweepParameter::Tau => "tau",
            SweepParameter::Samples => "samples",
            SweepParameter::RH => "r_h",
            SweepParameter::LeakCap => "leak_cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Exponent of the through-origin fit `q = ϑ x^exponent`.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub beps: u64,
    /// Draw only complementary bit pairs (HL or LH).
    pub complementary_only: bool,
    /// Attacks to evaluate; empty selects every attack the scenario supports.
    pub attacks: Vec<AttackKind>,
    pub kljn: KljnSection,
    pub defense: DefenseSection,
    pub injection: InjectionSection,
    pub coupler: CouplerSpec,
    pub walk: WalkSection,
    pub br: Option<BrConfig>,
    /// Segment length of the end-voltage spectra used by the wire Johnson attack.
    pub psd_segment: usize,
    pub security: SecuritySection,
    pub sweep: Option<SweepSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::KljnIdeal,
            seed: 1,
            beps: 1000,
            complementary_only: false,
            attacks: Vec::new(),
            kljn: KljnSection::default(),
            defense: DefenseSection::default(),
            injection: InjectionSection::default(),
            coupler: CouplerSpec::new(0.01, 500.0),
            walk: WalkSection::default(),
            br: None,
            psd_segment: 4096,
            security: SecuritySection::default(),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        ExperimentConfig { scenario, ..Default::default() }.resolved()
    }

    /// Parse TOML text; errors carry the line and column of the offending key.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fill scenario-dependent defaults.
    pub fn resolved(mut self) -> Self {
        if self.br.is_none() {
            self.br = self.scenario.default_br();
        }
        if !self.scenario.is_br() {
            self.br = None;
        }
        if self.attacks.is_empty() {
            self.attacks = self.scenario.default_attacks();
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.beps == 0 {
            return bad("beps must be >= 1".into());
        }
        self.kljn.loop_config().validate().map_err(|e| CliError::Config(format!("[kljn] {e}")))?;
        if !(self.kljn.tau > 0.0) || self.kljn.samples() < 4.0 {
            return bad(format!("[kljn] 2·bandwidth·tau = {} must be >= 4", self.kljn.samples()));
        }
        self.defense.to_core().validate().map_err(|e| CliError::Config(format!("[defense] {e}")))?;
        if !(0.0..1.0).contains(&self.injection.sigma) {
            return bad(format!("[injection] sigma = {} must lie in [0, 1)", self.injection.sigma));
        }
        self.coupler.validate().map_err(|e| CliError::Config(format!("[coupler] {e}")))?;
        if self.scenario == Scenario::KljnTransient && self.defense.transient_mode == TransientMode::RandomWalk {
            self.walk
                .to_core(&self.kljn)
                .validate()
                .map_err(|e| CliError::Config(format!("[walk] {e}")))?;
        }
        if self.complementary_only && self.scenario == Scenario::KljnTransient {
            return bad("complementary_only is not available for kljn_transient".into());
        }
        if let Some(br) = &self.br {
            br.validate().map_err(|e| CliError::Config(format!("[br] {e}")))?;
        }
        if self.psd_segment < 16 || !self.psd_segment.is_power_of_two() {
            return bad(format!("psd_segment = {} must be a power of two >= 16", self.psd_segment));
        }
        let supported = self.scenario.default_attacks();
        if let Some(a) = self.attacks.iter().find(|a| !supported.contains(a)) {
            return bad(format!("attack {} is not available in scenario {}", a.name(), self.scenario.name()));
        }
        if !(self.security.epsilon > 0.0) || self.security.key_lengths.contains(&0) {
            return bad("[security] epsilon must be positive and key lengths >= 1".into());
        }
        if !(0.0..0.5).contains(&self.security.q) {
            return bad(format!("[security] q = {} must lie in [0, 0.5)", self.security.q));
        }
        if let Some(s) = &self.sweep {
            if s.values.len() < 4 {
                return bad(format!("[sweep] needs >= 4 values, got {}", s.values.len()));
            }
            let up = s.values.windows(2).all(|w| w[1] > w[0]);
            let down = s.values.windows(2).all(|w| w[1] < w[0]);
            if !(up || down) {
                return bad("[sweep] values must be strictly monotone".into());
            }
            for &v in &s.values {
                self.with_parameter(s.parameter, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// Copy with one sweep parameter set; the copy has no sweep section.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> CliResult<Self> {
        let mut c = self.clone();
        c.sweep = None;
        match parameter {
            SweepParameter::RWireFraction => c.kljn.r_wire = value * (c.kljn.r_l + c.kljn.r_h),
            SweepParameter::RWire => c.kljn.r_wire = value,
            SweepParameter::Sigma => c.injection.sigma = value,
            SweepParameter::KappaRef => c.coupler.kappa_ref = value,
            SweepParameter::VRms => c.walk.v_rms = value,
            SweepParameter::Tau => c.kljn.tau = value,
            SweepParameter::Samples => c.kljn.tau = value / (2.0 * c.kljn.bandwidth),
            SweepParameter::RH => c.kljn.r_h = value,
            SweepParameter::LeakCap => c.defense.leak_cap = Some(value),
        }
        if !value.is_finite() {
            return Err(CliError::Config(format!("[sweep] non-finite value for {}", parameter.name())));
        }
        Ok(c)
    }
}
