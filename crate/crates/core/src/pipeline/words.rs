//! Word-serial AER framing: coordinates travel as separate row and column
//! words that the receiver merges back into events.

use crate::events::{Event, Polarity};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AerWord {
    /// Row address.
    Y { y: u16, t: u64 },
    /// Column address with the event polarity.
    X { x: u16, p: Polarity, t: u64 },
}

/// Which coordinate is sent first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WordOrder {
    #[default]
    YThenX,
    XThenY,
}

/// Splits one event into its two words.
pub fn split_event(e: &Event, order: WordOrder) -> [AerWord; 2] {
    let y = AerWord::Y { y: e.y, t: e.t };
    let x = AerWord::X { x: e.x, p: e.p, t: e.t };
    match order {
        WordOrder::YThenX => [y, x],
        WordOrder::XThenY => [x, y],
    }
}

pub fn split_words(events: &[Event], order: WordOrder) -> Vec<AerWord> {
    events.iter().flat_map(|e| split_event(e, order)).collect()
}

/// Latches the leading word and emits an event on the trailing one.
///
/// A leading word that overwrites a still-latched one, and a trailing word
/// with nothing latched, each count as a protocol error; the stream goes on.
#[derive(Clone, Debug, Default)]
pub struct WordMerger {
    order: WordOrder,
    latched: Option<AerWord>,
    protocol_errors: u64,
}

impl WordMerger {
    pub fn new(order: WordOrder) -> Self {
        WordMerger { order, ..Default::default() }
    }

    pub fn protocol_errors(&self) -> u64 {
        self.protocol_errors
    }

    pub fn push(&mut self, word: AerWord) -> Option<Event> {
        let leading = matches!(
            (self.order, word),
            (WordOrder::YThenX, AerWord::Y { .. }) | (WordOrder::XThenY, AerWord::X { .. })
        );
        if leading {
            if self.latched.replace(word).is_some() {
                self.protocol_errors += 1;
            }
            return None;
        }
        match (self.latched.take(), word) {
            (Some(AerWord::Y { y, .. }), AerWord::X { x, p, t })
            | (Some(AerWord::X { x, p, .. }), AerWord::Y { y, t }) => Some(Event::new(t, x, y, p)),
            _ => {
                self.protocol_errors += 1;
                None
            }
        }
    }
}

/// Merges a word stream; returns the events and the protocol error count.
pub fn merge_words(words: &[AerWord], order: WordOrder) -> (Vec<Event>, u64) {
    let mut merger = WordMerger::new(order);
    let events = words.iter().filter_map(|w| merger.push(*w)).collect();
    (events, merger.protocol_errors())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ON: Polarity = Polarity::On;

    #[test]
    fn merge_examples() {
        let words = [AerWord::Y { y: 20, t: 999 }, AerWord::X { x: 10, p: ON, t: 1000 }];
        assert_eq!(merge_words(&words, WordOrder::YThenX), (vec![Event::new(1000, 10, 20, ON)], 0));

        assert_eq!(merge_words(&[AerWord::X { x: 10, p: ON, t: 1000 }], WordOrder::YThenX), (vec![], 1));

        let words = [AerWord::Y { y: 20, t: 998 }, AerWord::Y { y: 30, t: 999 }, AerWord::X { x: 10, p: ON, t: 1000 }];
        assert_eq!(merge_words(&words, WordOrder::YThenX), (vec![Event::new(1000, 10, 30, ON)], 1));
    }

    #[test]
    fn split_examples() {
        let e = Event::new(5, 1, 2, Polarity::Off);
        assert_eq!(
            split_words(&[e], WordOrder::YThenX),
            vec![AerWord::Y { y: 2, t: 5 }, AerWord::X { x: 1, p: Polarity::Off, t: 5 }]
        );
        assert_eq!(split_words(&[e], WordOrder::XThenY)[0], AerWord::X { x: 1, p: Polarity::Off, t: 5 });
        assert!(split_words(&[], WordOrder::YThenX).is_empty());
    }

    #[test]
    fn x_first_order_merges_on_row_word() {
        let words = [AerWord::X { x: 3, p: ON, t: 7 }, AerWord::Y { y: 4, t: 8 }];
        assert_eq!(merge_words(&words, WordOrder::XThenY), (vec![Event::new(8, 3, 4, ON)], 0));
        // wrong framing: the orphan X is counted, the dangling Y stays latched
        assert_eq!(merge_words(&words, WordOrder::YThenX), (vec![], 1));
    }

    proptest! {
        #[test]
        fn split_merge_round_trip(
            raw in prop::collection::vec((0u64..1000, any::<u16>(), any::<u16>(), any::<bool>()), 0..1000),
            x_first in any::<bool>(),
        ) {
            let mut t = 0;
            let events: Vec<Event> = raw.into_iter().map(|(dt, x, y, on)| {
                t += dt;
                Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
            }).collect();
            let order = if x_first { WordOrder::XThenY } else { WordOrder::YThenX };
            let (back, errors) = merge_words(&split_words(&events, order), order);
            prop_assert_eq!(back, events);
            prop_assert_eq!(errors, 0);
        }
    }
}
