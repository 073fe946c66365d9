//! External context: storage outside the processor window.

mod archival;
mod recall;

pub use archival::{ArchivalEntry, ArchivalError, ArchivalHit, ArchivalId, ArchivalStore};
pub use recall::{RecallEntry, RecallError, RecallStore};

use serde::{Deserialize, Serialize};

pub const DEFAULT_PAGE_SIZE: usize = 5;

/// One page of search results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub page_index: usize,
    pub total_matches: usize,
    pub has_more: bool,
}

impl<T> Page<T> {
    /// Slices page `page_index` out of the full, already ordered match list.
    pub fn slice(all: Vec<T>, page_index: usize, page_size: usize) -> Page<T> {
        assert!(page_size > 0, "page size must be positive");
        let total_matches = all.len();
        let start = page_index.saturating_mul(page_size).min(total_matches);
        let items: Vec<T> = all.into_iter().skip(start).take(page_size).collect();
        Page {
            items,
            page_index,
            total_matches,
            has_more: (page_index + 1).saturating_mul(page_size) < total_matches,
        }
    }

    pub fn map<U>(self, f: impl FnMut(T) -> U) -> Page<U> {
        Page {
            items: self.items.into_iter().map(f).collect(),
            page_index: self.page_index,
            total_matches: self.total_matches,
            has_more: self.has_more,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_in_pages_of_five() {
        let all: Vec<u32> = (0..12).collect();
        let sizes: Vec<usize> = (0..3)
            .map(|p| Page::slice(all.clone(), p, 5).items.len())
            .collect();
        assert_eq!(sizes, [5, 5, 2]);
        assert!(Page::slice(all.clone(), 1, 5).has_more);
        assert!(!Page::slice(all.clone(), 2, 5).has_more);
        let past = Page::slice(all, 9, 5);
        assert!(past.items.is_empty());
        assert_eq!(past.total_matches, 12);
    }

    proptest! {
        #[test]
        fn pages_partition_the_matches(n in 0usize..60, size in 1usize..9) {
            let all: Vec<usize> = (0..n).collect();
            let mut seen = vec![];
            let mut p = 0;
            loop {
                let page = Page::slice(all.clone(), p, size);
                prop_assert!(page.items.len() <= size);
                prop_assert_eq!(page.has_more, (p + 1) * size < n);
                seen.extend(page.items);
                if !page.has_more { break; }
                p += 1;
            }
            prop_assert_eq!(seen, all);
        }
    }
}
