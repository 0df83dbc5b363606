use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::{Operand, Power, PulseProgram, Quantity, RepeatMode, Step, SweepValues};
use super::validate::validate;
use super::PulseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CannedName {
    Fig1c,
    FigS7Calibration,
    FigS11CurieRound,
    FigS6Seq1,
    FigS6Seq2,
    FigS6Seq3,
    FigS6Seq4,
    RelaxFig2a,
    RabiFig2d,
}

impl CannedName {
    pub const ALL: [CannedName; 9] = [
        CannedName::Fig1c,
        CannedName::FigS7Calibration,
        CannedName::FigS11CurieRound,
        CannedName::FigS6Seq1,
        CannedName::FigS6Seq2,
        CannedName::FigS6Seq3,
        CannedName::FigS6Seq4,
        CannedName::RelaxFig2a,
        CannedName::RabiFig2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CannedName::Fig1c => "fig1c",
            CannedName::FigS7Calibration => "figS7_calibration",
            CannedName::FigS11CurieRound => "figS11_curie_round",
            CannedName::FigS6Seq1 => "figS6_seq1",
            CannedName::FigS6Seq2 => "figS6_seq2",
            CannedName::FigS6Seq3 => "figS6_seq3",
            CannedName::FigS6Seq4 => "figS6_seq4",
            CannedName::RelaxFig2a => "relax_fig2a",
            CannedName::RabiFig2d => "rabi_fig2d",
        }
    }
}

impl fmt::Display for CannedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CannedName {
    type Err = PulseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PulseError::UnknownProgram(s.to_string()))
    }
}

/// Timings and loop sizes of a canned protocol. Fields a protocol does not
/// use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedParams {
    pub power: Power,
    pub heat_duration: Quantity,
    /// `t_w` values; a single value is inlined instead of swept.
    pub waits: Vec<Quantity>,
    /// Wait between the microwave pulse and the readout.
    pub cool_wait: Quantity,
    pub frequencies: SweepValues,
    /// Fixed microwave frequency of the relaxation and Rabi protocols.
    pub mw_frequency: Quantity,
    pub mw_duration: Quantity,
    pub pr_duration: Quantity,
    /// Accumulating repetitions `M`.
    pub accumulate: u32,
    /// Separately recorded passes `N`.
    pub passes: u32,
    /// `τ_h` sweep of the relaxation protocol.
    pub heat_durations: SweepValues,
    /// Pulse-length sweep of the Rabi protocol.
    pub mw_durations: SweepValues,
}

fn range(a: Quantity, b: Quantity, s: Quantity) -> SweepValues {
    SweepValues::Range { start: a, stop: b, step: s }
}

impl CannedParams {
    pub fn defaults(name: CannedName) -> Self {
        let base = Self {
            power: Power::Scale(1.0),
            heat_duration: Quantity::us(5.0),
            waits: vec![Quantity::us(0.0)],
            cool_wait: Quantity::us(2.0),
            frequencies: range(Quantity::mhz(2740.0), Quantity::mhz(2900.0), Quantity::mhz(4.0)),
            mw_frequency: Quantity::mhz(2870.0),
            mw_duration: Quantity::ns(30.0),
            pr_duration: Quantity::us(3.0),
            accumulate: 200,
            passes: 1,
            heat_durations: SweepValues::List([1.0, 2.0, 4.0, 8.0, 16.0, 32.0].into_iter().map(Quantity::us).collect()),
            mw_durations: range(Quantity::ns(0.0), Quantity::ns(250.0), Quantity::ns(5.0)),
        };
        match name {
            CannedName::Fig1c => base,
            CannedName::FigS7Calibration => Self {
                power: Power::Od(5),
                heat_duration: Quantity::us(10.0),
                waits: [-0.2, 0.3, 0.6, 1.0, 1.4, 2.2].into_iter().map(Quantity::us).collect(),
                frequencies: range(Quantity::mhz(2730.0), Quantity::mhz(2890.0), Quantity::mhz(2.0)),
                passes: 5,
                ..base
            },
            CannedName::FigS11CurieRound => Self {
                heat_duration: Quantity::us(10.0),
                waits: [0.0, 0.5, 1.0, 1.5, 2.0, 3.0].into_iter().map(Quantity::us).collect(),
                frequencies: range(Quantity::mhz(2780.0), Quantity::mhz(2960.0), Quantity::mhz(2.0)),
                ..base
            },
            CannedName::FigS6Seq1 | CannedName::FigS6Seq2 | CannedName::FigS6Seq3 | CannedName::FigS6Seq4 => Self {
                heat_duration: Quantity::us(20.0),
                frequencies: range(Quantity::mhz(2770.0), Quantity::mhz(2850.0), Quantity::mhz(2.0)),
                ..base
            },
            CannedName::RelaxFig2a => Self { cool_wait: Quantity::us(8.0), ..base },
            CannedName::RabiFig2d => Self { cool_wait: Quantity::us(3.0), ..base },
        }
    }
}

fn pr(d: Quantity) -> Step {
    Step::Pr(d.into())
}

fn heat(power: Power, d: impl Into<Operand>) -> Step {
    Step::Heat { power, duration: d.into() }
}

fn wait(d: impl Into<Operand>) -> Step {
    Step::Wait(d.into())
}

fn mw(f: impl Into<Operand>, d: impl Into<Operand>) -> Step {
    Step::Mw { frequency: f.into(), duration: d.into() }
}

fn sym(s: &str) -> Operand {
    Operand::Sym(s.to_string())
}

fn repeat(body: Vec<Step>, count: u32, mode: RepeatMode) -> Step {
    Step::Repeat { body, count, mode }
}

fn sweep(symbol: &str, values: SweepValues, body: Vec<Step>) -> Step {
    Step::Sweep { symbol: symbol.to_string(), values, body }
}

/// Wait step for `t_w`: inlined literal for a single value, symbol otherwise.
fn tw_operand(p: &CannedParams) -> Operand {
    if p.waits.len() == 1 {
        p.waits[0].into()
    } else {
        sym("tw")
    }
}

fn wrap_tw(p: &CannedParams, body: Vec<Step>) -> Vec<Step> {
    if p.waits.len() == 1 {
        body
    } else {
        vec![sweep("tw", SweepValues::List(p.waits.clone()), body)]
    }
}

fn freq_block(p: &CannedParams, cycle: Vec<Step>) -> Step {
    sweep("w", p.frequencies.clone(), vec![pr(p.pr_duration), repeat(cycle, p.accumulate, RepeatMode::Accumulate)])
}

pub fn canned(name: CannedName, p: &CannedParams) -> Result<PulseProgram, PulseError> {
    let hot_read = Quantity::us(0.4);
    let body = match name {
        CannedName::Fig1c => wrap_tw(
            p,
            vec![freq_block(
                p,
                vec![
                    heat(p.power, p.heat_duration),
                    wait(tw_operand(p)),
                    mw(sym("w"), p.mw_duration),
                    wait(p.cool_wait),
                    pr(p.pr_duration),
                ],
            )],
        ),
        CannedName::FigS7Calibration => {
            let inner = wrap_tw(
                p,
                vec![
                    heat(p.power, p.heat_duration),
                    wait(tw_operand(p)),
                    mw(sym("w"), p.mw_duration),
                    wait(p.cool_wait),
                    pr(p.pr_duration),
                ],
            );
            let per_freq = sweep(
                "w",
                p.frequencies.clone(),
                vec![pr(p.pr_duration), repeat(inner, p.accumulate, RepeatMode::Accumulate)],
            );
            vec![repeat(vec![per_freq], p.passes, RepeatMode::Separate)]
        }
        CannedName::FigS11CurieRound => {
            let per_tw = repeat(
                vec![freq_block(
                    p,
                    vec![
                        heat(p.power, p.heat_duration),
                        wait(tw_operand(p)),
                        mw(sym("w"), p.mw_duration),
                        wait(p.cool_wait),
                        pr(p.pr_duration),
                    ],
                )],
                p.passes,
                RepeatMode::Separate,
            );
            wrap_tw(p, vec![per_tw])
        }
        CannedName::FigS6Seq1 | CannedName::FigS6Seq2 | CannedName::FigS6Seq3 | CannedName::FigS6Seq4 => {
            let hot_polarize = matches!(name, CannedName::FigS6Seq1 | CannedName::FigS6Seq3);
            let hot_readout = matches!(name, CannedName::FigS6Seq1 | CannedName::FigS6Seq2);
            let mw_offset = Quantity::us(-0.2);
            let mut cycle = vec![heat(p.power, p.heat_duration)];
            if hot_polarize {
                let back = Quantity::us(-8.0);
                cycle.push(wait(back));
                cycle.push(pr(p.pr_duration));
                let gap = -back.si() - p.pr_duration.si() + mw_offset.si();
                cycle.push(wait(Quantity::us(round_us(gap))));
            } else {
                cycle.push(wait(mw_offset));
            }
            cycle.push(mw(sym("w"), p.mw_duration));
            cycle.push(wait(if hot_readout { hot_read } else { p.cool_wait }));
            cycle.push(pr(p.pr_duration));
            vec![freq_block(p, cycle)]
        }
        CannedName::RelaxFig2a => vec![sweep(
            "th",
            p.heat_durations.clone(),
            vec![
                pr(p.pr_duration),
                repeat(
                    vec![
                        heat(p.power, sym("th")),
                        wait(p.cool_wait),
                        pr(p.pr_duration),
                        mw(p.mw_frequency, p.mw_duration),
                        heat(p.power, sym("th")),
                        wait(p.cool_wait),
                        pr(p.pr_duration),
                    ],
                    p.accumulate,
                    RepeatMode::Accumulate,
                ),
            ],
        )],
        CannedName::RabiFig2d => vec![sweep(
            "tau",
            p.mw_durations.clone(),
            vec![
                pr(p.pr_duration),
                repeat(
                    vec![
                        heat(p.power, p.heat_duration),
                        wait(Quantity::us(-0.3)),
                        mw(p.mw_frequency, sym("tau")),
                        wait(p.cool_wait),
                        pr(p.pr_duration),
                    ],
                    p.accumulate,
                    RepeatMode::Accumulate,
                ),
            ],
        )],
    };
    let program = PulseProgram { body };
    validate(&program)?;
    Ok(program)
}

fn round_us(seconds: f64) -> f64 {
    (seconds * 1e6 * 1e9).round() / 1e9
}
