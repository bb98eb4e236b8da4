use super::ratings::RatingsDataset;

/// Compressed row (by user) and column (by item) views of a rating set.
#[derive(Debug, Clone)]
pub struct SparseRatings {
    num_users: usize,
    num_items: usize,
    row_ptr: Vec<usize>,
    row_items: Vec<usize>,
    row_values: Vec<f64>,
    col_ptr: Vec<usize>,
    col_users: Vec<usize>,
    col_values: Vec<f64>,
}

impl SparseRatings {
    pub fn from_dataset(ds: &RatingsDataset) -> Self {
        let (n, m) = (ds.num_users(), ds.num_items());
        let ratings = ds.ratings();

        let mut by_user: Vec<usize> = (0..ratings.len()).collect();
        by_user.sort_by_key(|&t| (ratings[t].user, ratings[t].item));
        let mut row_ptr = vec![0usize; n + 1];
        for r in ratings {
            row_ptr[r.user + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let row_items = by_user.iter().map(|&t| ratings[t].item).collect();
        let row_values = by_user.iter().map(|&t| ratings[t].value).collect();

        let mut by_item: Vec<usize> = (0..ratings.len()).collect();
        by_item.sort_by_key(|&t| (ratings[t].item, ratings[t].user));
        let mut col_ptr = vec![0usize; m + 1];
        for r in ratings {
            col_ptr[r.item + 1] += 1;
        }
        for j in 0..m {
            col_ptr[j + 1] += col_ptr[j];
        }
        let col_users = by_item.iter().map(|&t| ratings[t].user).collect();
        let col_values = by_item.iter().map(|&t| ratings[t].value).collect();

        SparseRatings {
            num_users: n,
            num_items: m,
            row_ptr,
            row_items,
            row_values,
            col_ptr,
            col_users,
            col_values,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.row_items.len()
    }

    /// Items rated by user `i` (ascending) and the matching ratings.
    pub fn user_row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.row_items[a..b], &self.row_values[a..b])
    }

    /// Users who rated item `j` (ascending) and the matching ratings.
    pub fn item_col(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.col_users[a..b], &self.col_values[a..b])
    }

    pub fn user_count(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn item_count(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// Triplets in row order.
    pub fn iter_by_user(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_users).flat_map(move |i| {
            let (items, values) = self.user_row(i);
            items.iter().zip(values).map(move |(&j, &r)| (i, j, r))
        })
    }

    /// Triplets in column order.
    pub fn iter_by_item(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_items).flat_map(move |j| {
            let (users, values) = self.item_col(j);
            users.iter().zip(values).map(move |(&i, &r)| (i, j, r))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingScale;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn views_enumerate_the_same_triplets(
            cells in proptest::collection::btree_map((0usize..12, 0usize..9), 1u8..=5, 0..60)
        ) {
            let ds = RatingsDataset::from_triplets(
                12, 9,
                cells.iter().map(|(&(i, j), &r)| (i, j, r as f64)),
                RatingScale::default(),
            ).unwrap();
            let sp = SparseRatings::from_dataset(&ds);
            let mut a: Vec<_> = sp.iter_by_user().map(|(i, j, r)| (i, j, r as u8)).collect();
            let mut b: Vec<_> = sp.iter_by_item().map(|(i, j, r)| (i, j, r as u8)).collect();
            let mut c: Vec<_> = ds.ratings().iter().map(|r| (r.user, r.item, r.value as u8)).collect();
            a.sort();
            b.sort();
            c.sort();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, &c);
            for i in 0..12 {
                let expected = cells.keys().filter(|(u, _)| *u == i).count();
                prop_assert_eq!(sp.user_count(i), expected);
            }
        }
    }
}
