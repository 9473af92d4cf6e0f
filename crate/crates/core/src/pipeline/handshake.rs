//! Transaction-level model of a 4-phase (return-to-zero) request/acknowledge
//! link. One datum is in flight per cycle
//! `Idle -> ReqUp -> AckUp -> ReqDown -> Idle`.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// req and ack low
    Idle,
    /// sender raised req with data valid
    ReqUp,
    /// receiver latched data and raised ack
    AckUp,
    /// sender dropped req, ack still high
    ReqDown,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{action} is not allowed while the link is in phase {phase:?}")]
pub struct HandshakeError {
    pub action: &'static str,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
pub struct HandshakeChannel<T> {
    phase: Phase,
    slot: Option<T>,
    transferred: u64,
    protocol_errors: u64,
}

impl<T> Default for HandshakeChannel<T> {
    fn default() -> Self {
        HandshakeChannel { phase: Phase::Idle, slot: None, transferred: 0, protocol_errors: 0 }
    }
}

impl<T> HandshakeChannel<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Data items handed to the receiver.
    pub fn transferred(&self) -> u64 {
        self.transferred
    }

    /// Rejected out-of-phase transitions.
    pub fn protocol_errors(&self) -> u64 {
        self.protocol_errors
    }

    fn expect(&mut self, phase: Phase, action: &'static str) -> Result<(), HandshakeError> {
        if self.phase == phase {
            Ok(())
        } else {
            self.protocol_errors += 1;
            Err(HandshakeError { action, phase: self.phase })
        }
    }

    /// Sender: put data on the bus and raise req.
    pub fn raise_request(&mut self, datum: T) -> Result<(), HandshakeError> {
        self.expect(Phase::Idle, "raise_request")?;
        self.slot = Some(datum);
        self.phase = Phase::ReqUp;
        Ok(())
    }

    /// Receiver: latch the data and raise ack.
    pub fn raise_ack(&mut self) -> Result<T, HandshakeError> {
        self.expect(Phase::ReqUp, "raise_ack")?;
        let datum = self.slot.take().expect("data valid while req is high");
        self.phase = Phase::AckUp;
        self.transferred += 1;
        Ok(datum)
    }

    /// Sender: drop req once ack is seen.
    pub fn lower_request(&mut self) -> Result<(), HandshakeError> {
        self.expect(Phase::AckUp, "lower_request")?;
        self.phase = Phase::ReqDown;
        Ok(())
    }

    /// Receiver: drop ack once req is low, completing the cycle.
    pub fn lower_ack(&mut self) -> Result<(), HandshakeError> {
        self.expect(Phase::ReqDown, "lower_ack")?;
        self.phase = Phase::Idle;
        Ok(())
    }

    /// Starts a transfer. Only valid on an idle link.
    pub fn send(&mut self, datum: T) -> Result<(), HandshakeError> {
        self.raise_request(datum)
    }

    /// Takes the pending datum and runs the return-to-zero half of the cycle.
    pub fn receive(&mut self) -> Result<T, HandshakeError> {
        let datum = self.raise_ack()?;
        self.lower_request()?;
        self.lower_ack()?;
        Ok(datum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_transfers_in_order() {
        let mut ch = HandshakeChannel::new();
        let mut got = Vec::new();
        for d in [7, 8, 9] {
            ch.send(d).unwrap();
            got.push(ch.receive().unwrap());
        }
        assert_eq!(got, vec![7, 8, 9]);
        assert_eq!(ch.transferred(), 3);
        assert_eq!(ch.protocol_errors(), 0);
        assert_eq!(ch.phase(), Phase::Idle);
    }

    #[test]
    fn receive_on_idle_is_a_violation() {
        let mut ch: HandshakeChannel<u8> = HandshakeChannel::new();
        assert_eq!(ch.receive(), Err(HandshakeError { action: "raise_ack", phase: Phase::Idle }));
        assert_eq!(ch.protocol_errors(), 1);
        assert_eq!(ch.transferred(), 0);
    }

    #[test]
    fn send_while_busy_is_a_violation() {
        let mut ch = HandshakeChannel::new();
        ch.send(1).unwrap();
        assert!(ch.send(2).is_err());
        // the pending datum is untouched by the rejected send
        assert_eq!(ch.receive(), Ok(1));
        assert_eq!(ch.protocol_errors(), 1);
    }

    #[test]
    fn phases_cycle_in_order() {
        let mut ch = HandshakeChannel::new();
        let mut seen = vec![ch.phase()];
        ch.raise_request('a').unwrap();
        seen.push(ch.phase());
        assert!(ch.lower_ack().is_err());
        assert_eq!(ch.raise_ack(), Ok('a'));
        seen.push(ch.phase());
        assert!(ch.raise_request('b').is_err());
        ch.lower_request().unwrap();
        seen.push(ch.phase());
        ch.lower_ack().unwrap();
        seen.push(ch.phase());
        assert_eq!(seen, vec![Phase::Idle, Phase::ReqUp, Phase::AckUp, Phase::ReqDown, Phase::Idle]);
        assert_eq!(ch.protocol_errors(), 2);
    }

    proptest! {
        // Sender and receiver each take their next step only when the link is
        // in their phase; `stalls` decides who is polled at each tick.
        #[test]
        fn exactly_once_in_order(data in prop::collection::vec(any::<u32>(), 0..300), stalls in prop::collection::vec(any::<bool>(), 4096)) {
            let mut ch = HandshakeChannel::new();
            let mut pending = data.iter().copied();
            let mut next = pending.next();
            let mut got = Vec::new();
            let mut tick = 0usize;
            while next.is_some() || ch.phase() != Phase::Idle {
                // flip every full pass over `stalls` so neither side can starve
                let sender_turn = stalls[tick % stalls.len()] ^ ((tick / stalls.len()) % 2 == 1);
                tick += 1;
                match (sender_turn, ch.phase()) {
                    (true, Phase::Idle) => {
                        ch.raise_request(next.unwrap()).unwrap();
                        next = pending.next();
                    }
                    (true, Phase::AckUp) => ch.lower_request().unwrap(),
                    (false, Phase::ReqUp) => got.push(ch.raise_ack().unwrap()),
                    (false, Phase::ReqDown) => ch.lower_ack().unwrap(),
                    _ => {}
                }
                prop_assert!(tick < 4096 * 4 * (data.len() + 1), "livelock");
            }
            prop_assert_eq!(&got, &data);
            prop_assert_eq!(ch.transferred(), data.len() as u64);
            prop_assert_eq!(ch.protocol_errors(), 0);
        }
    }
}
