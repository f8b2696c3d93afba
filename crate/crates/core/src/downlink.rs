//! One coherent processing interval of the ISAC downlink: pilots, channel
//! estimates, precoders and transmitted symbols for every slot and
//! coherence block.
//!
//! The UE channel is flat within a coherence block and independent across
//! blocks. Pilots occupy slots `0, Δ+1, 2(Δ+1), …` and the first `τ_p`
//! subcarriers of every block; `p` earlier pilots (negative slots) precede
//! the interval. Data-slot precoders use the estimate taken at the frame's
//! pilot slot and are held until the next pilot.

use crate::covariance::complex_normal;
use crate::estimation::{despread, MmseEstimator, PilotHistory, PilotObservation};
use crate::linalg::{ComplexMatrix, ComplexTensor3};
use crate::precoding::{
    allocate_powers, mmse_precoder, pilot_precoder, sensing_precoder, NullSpaceProjector, PowerAllocation,
    PrecoderSet, UeLink,
};
use crate::scenario::{pilot_matrices, received_pilot, sample_ue_channel_series, steering_a, Scenario};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;

/// Everything the radar side needs from the downlink, plus the analytic
/// estimation error at each frame's pilot.
#[derive(Clone, Debug)]
pub struct DownlinkRealisation {
    pub precoders: PrecoderSet,
    /// `[S, I, V]` unit-variance symbols (pilot entries on pilot subcarriers).
    pub symbols: ComplexTensor3,
    pub powers: PowerAllocation,
    pub pilot_slots: Vec<usize>,
    /// `Tr(Ξ̃)` at the pilot slot, per UE.
    pub pilot_nmse: Vec<f64>,
    /// Stacked estimates `[Ĥ_1; …; Ĥ_K]` at pilot `j` of block `b`, index `j·blocks + b`.
    pub channel_estimates: Vec<ComplexMatrix>,
}

impl DownlinkRealisation {
    pub fn effective_precoders(&self) -> Vec<ComplexMatrix> {
        self.precoders.effective()
    }
}

/// Pilot slots inside an interval of `slots` slots.
pub fn pilot_slots(slots: usize, data_slots: usize) -> Vec<usize> {
    (0..slots).step_by(data_slots + 1).collect()
}

/// Analytic NMSE `Tr(Ξ̃)` at slots `0..=Δ` of a frame for the configured
/// pilot beams, powers and `p` past pilots.
pub fn frame_nmse_curve(scenario: &Scenario) -> Result<Vec<f64>> {
    let cfg = &scenario.cfg;
    let amps = allocate_powers(cfg)?.amplitudes();
    let beams = pilot_precoder(&scenario.ue.transmit_correlation(), scenario.ue_antennas())?;
    crate::estimation::nmse_curve(
        &scenario.ue,
        &(&beams * Complex64::new(amps[0], 0.0)),
        scenario.ue_gain,
        cfg.ofdm.pilot_subcarriers as f64,
        scenario.ue_noise,
        cfg.frame.data_slots,
        cfg.frame.past_pilots,
    )
}

/// `[ℶ_1; …; ℶ_K; ℶ_sens]`: one DFT row per stream.
fn full_pilot(scenario: &Scenario) -> Result<ComplexMatrix> {
    let s = scenario.streams();
    let tau = scenario.cfg.ofdm.pilot_subcarriers;
    let rows = pilot_matrices(1, s, tau)?;
    Ok(rows.into_iter().next().expect("one pilot block"))
}

/// Simulate the downlink over the whole interval.
pub fn simulate_downlink<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<DownlinkRealisation> {
    let cfg = &scenario.cfg;
    let m = scenario.bs_antennas();
    let m_ue = scenario.ue_antennas();
    let ues = scenario.ues();
    let s = scenario.streams();
    let comm = ues * m_ue;
    let slots = scenario.slots();
    let blocks = scenario.blocks();
    let v = scenario.subcarriers();
    let tau = cfg.ofdm.pilot_subcarriers;
    if tau < s || tau > cfg.ofdm.coherence_block.min(v) {
        return Err(Error::Config(format!(
            "pilot length {tau} must cover {s} streams and fit in a coherence block"
        )));
    }
    let spacing = cfg.frame.data_slots + 1;
    let past = cfg.frame.past_pilots;
    let powers = allocate_powers(cfg)?;
    let amps = powers.amplitudes();
    let alpha = scenario.ue_gain;
    let noise = scenario.ue_noise;

    let pilots_in = pilot_slots(slots, cfg.frame.data_slots);
    let all_pilots: Vec<i64> = (-(past as i64)..pilots_in.len() as i64).map(|j| j * spacing as i64).collect();
    let pilot = full_pilot(scenario)?;
    let own_rows: Vec<ComplexMatrix> = (0..ues).map(|k| pilot.rows(k * m_ue, m_ue).into_owned()).collect();

    // Pilot beams and the (statistics-only) estimator are shared by every
    // frame and block.
    let beams = pilot_precoder(&scenario.ue.transmit_correlation(), m_ue)?;
    let own_effective = &beams * Complex64::new(amps[0], 0.0);
    let history_slots: Vec<i64> = (0..=past as i64).map(|j| -j * spacing as i64).collect();
    let estimator = MmseEstimator::new(
        &scenario.ue,
        &history_slots,
        &vec![own_effective.clone(); history_slots.len()],
        alpha,
        tau as f64,
        noise,
        0,
    )?;

    let mut pilot_precoder_full = ComplexMatrix::zeros(m, s);
    for k in 0..ues {
        pilot_precoder_full.view_mut((0, k * m_ue), (m, m_ue)).copy_from(&beams);
    }

    let sweep = scenario.sweep_angles();
    let sweep_beams: Vec<_> = sweep.iter().map(|&th| steering_a(th, m)).collect();
    let mut matrices = vec![ComplexMatrix::zeros(m, s); slots * blocks];
    let is_pilot: Vec<bool> = (0..slots).map(|i| i % spacing == 0).collect();
    let mut channel_estimates = vec![ComplexMatrix::zeros(comm, m); pilots_in.len() * blocks];

    for b in 0..blocks {
        // Independent realisation per UE and block.
        let series: Vec<_> = (0..ues)
            .map(|_| sample_ue_channel_series(&scenario.ue, &all_pilots, rng))
            .collect::<Result<_>>()?;
        let mut histories = vec![PilotHistory::new(); ues];
        for (j, &slot) in all_pilots.iter().enumerate() {
            let mut f = pilot_precoder_full.clone();
            let beam_slot = slot.rem_euclid(slots as i64) as usize;
            f.set_column(s - 1, &(&sweep_beams[beam_slot] / Complex64::new((m as f64).sqrt(), 0.0)));
            for k in 0..ues {
                let h = series[k].matrix(j);
                let y = received_pilot(alpha, &h, &f, &amps, std::slice::from_ref(&pilot), noise, rng)?;
                let obs = PilotObservation { slot, precoder: own_effective.clone(), despread: despread(&y, &own_rows[k], tau as f64)? };
                histories[k].push(obs)?;
            }
            if slot < 0 {
                continue;
            }
            let slot = slot as usize;
            matrices[slot * blocks + b] = f;

            // Estimate at this pilot from it and the `past` before it.
            let links: Vec<UeLink> = histories
                .iter()
                .map(|hist| {
                    let mut recent = hist.clone();
                    recent.entries.retain(|e| e.slot <= slot as i64);
                    recent.truncate(past + 1);
                    let shifted = PilotHistory {
                        entries: recent
                            .entries
                            .iter()
                            .map(|e| PilotObservation { slot: e.slot - slot as i64, ..e.clone() })
                            .collect(),
                    };
                    let est = estimator.apply(&shifted)?;
                    Ok(UeLink {
                        estimate: est.matrix(m_ue),
                        error_cov: est.error_cov,
                        alpha,
                        stream_power: powers.comm_per_stream,
                    })
                })
                .collect::<Result<_>>()?;
            let data = mmse_precoder(&links, noise)?;
            let stacked = ComplexMatrix::from_rows(
                &links.iter().flat_map(|l| l.estimate.row_iter().map(|r| r.into_owned()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            );
            let projector = NullSpaceProjector::new(&stacked)?;
            channel_estimates[(slot / spacing) * blocks + b] = stacked;
            for i in slot + 1..(slot + spacing).min(slots) {
                let mut f = ComplexMatrix::zeros(m, s);
                f.view_mut((0, 0), (m, comm)).copy_from(&data);
                f.set_column(s - 1, &sensing_precoder(&projector, &sweep_beams[i])?);
                matrices[i * blocks + b] = f;
            }
        }
    }

    let unit = std::f64::consts::FRAC_1_SQRT_2;
    let mut symbols = ComplexTensor3::zeros([s, slots, v]);
    for sub in 0..v {
        for i in 0..slots {
            let x = symbols.fibre_mut(i, sub);
            let offset = sub - scenario.block_of(sub) * cfg.ofdm.coherence_block;
            if is_pilot[i] && offset < tau {
                for (st, xs) in x.iter_mut().enumerate() {
                    *xs = pilot[(st, offset)];
                }
            } else {
                for xs in x.iter_mut() {
                    *xs = complex_normal(rng, unit);
                }
            }
        }
    }

    Ok(DownlinkRealisation {
        precoders: PrecoderSet { slots, blocks, matrices, amplitudes: amps, pilot_slot: is_pilot },
        symbols,
        powers,
        pilot_slots: pilots_in,
        pilot_nmse: vec![estimator.nmse(); ues],
        channel_estimates,
    })
}
