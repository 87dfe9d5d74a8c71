import { describe, expect, it } from 'vitest';

import { RatingApi } from '../src/api.js';
import { SessionController } from '../src/state.js';
import { MemoryStorage, MockRatingService } from './helpers.js';

function makeController(service: MockRatingService, storage = new MemoryStorage()) {
  const api = new RatingApi('', service.fetch);
  return new SessionController(api, 'R1', { storage });
}

describe('SessionController', () => {
  it('starts a session and exposes the first item', async () => {
    const service = new MockRatingService(5);
    const controller = makeController(service);
    await controller.start();
    expect(controller.state.phase).toBe('item');
    expect(controller.state.current?.item_id).toBe('item0000');
    expect(controller.state.progress).toEqual({ answered: 0, total: 5 });
    expect(controller.state.inFlight).toBe(false);
  });

  it('emits exactly one request per item even under rapid double submits', async () => {
    const service = new MockRatingService(3);
    const controller = makeController(service);
    await controller.start();

    const first = controller.answer('yes');
    const second = controller.answer('no'); // double-click during flight
    const [ok1, ok2] = await Promise.all([first, second]);

    expect(ok1).toBe(true);
    expect(ok2).toBe(false);
    expect(service.log).toHaveLength(1);
    expect(service.log[0]).toEqual({
      rater_id: 'R1',
      item_id: 'item0000',
      answer: 'yes',
    });
    expect(controller.state.current?.item_id).toBe('item0001');
  });

  it('ignores answers when there is no current item', async () => {
    const service = new MockRatingService(1);
    const controller = makeController(service);
    expect(await controller.answer('yes')).toBe(false);
    await controller.start();
    await controller.answer('yes');
    expect(controller.state.phase).toBe('done');
    expect(await controller.answer('no')).toBe(false);
    expect(service.log).toHaveLength(1);
  });

  it('resyncs on conflict without losing progress', async () => {
    const service = new MockRatingService(4);
    const controller = makeController(service);
    await controller.start();

    // Another tab answers the same item behind this controller's back.
    const api = new RatingApi('', service.fetch);
    await api.submitAnswer('session-R1', 'item0000', 'no');

    const attempted = await controller.answer('yes');
    expect(attempted).toBe(true);
    expect(controller.state.phase).toBe('item');
    expect(controller.state.current?.item_id).toBe('item0001');
    expect(controller.state.progress).toEqual({ answered: 1, total: 4 });
    // Only the other tab's answer was logged; the rejected one never was.
    expect(service.log).toEqual([
      { rater_id: 'R1', item_id: 'item0000', answer: 'no' },
    ]);
  });

  it('resumes from stored session id without reopening the session', async () => {
    const service = new MockRatingService(5);
    const storage = new MemoryStorage();

    const first = makeController(service, storage);
    await first.start();
    await first.answer('yes');
    await first.answer('no');
    expect(service.count('/api/session')).toBe(1);

    const reloaded = makeController(service, storage);
    await reloaded.start();
    expect(service.count('/api/session')).toBe(1); // no second open call
    expect(reloaded.state.sessionId).toBe('session-R1');
    expect(reloaded.state.progress).toEqual({ answered: 2, total: 5 });
    expect(reloaded.state.current?.item_id).toBe('item0002');
  });

  it('keeps local state on network failure and recovers via retry', async () => {
    const service = new MockRatingService(3);
    const controller = makeController(service);
    await controller.start();

    service.failNextRequests = 1;
    await controller.answer('yes');
    expect(controller.state.phase).toBe('error');
    expect(controller.state.lastError).toContain('network failure');
    expect(service.log).toHaveLength(0);

    await controller.retry();
    expect(controller.state.phase).toBe('item');
    expect(service.log).toHaveLength(1);
    expect(service.log[0].item_id).toBe('item0000');
    expect(controller.state.current?.item_id).toBe('item0001');
  });

  it('recovers when the very first fetch fails', async () => {
    const service = new MockRatingService(2);
    const controller = makeController(service);
    service.failNextRequests = 1;
    await controller.start();
    expect(controller.state.phase).toBe('error');
    await controller.retry();
    expect(controller.state.phase).toBe('item');
    expect(controller.state.current?.item_id).toBe('item0000');
  });

  it('notifies listeners on every transition', async () => {
    const service = new MockRatingService(1);
    const controller = makeController(service);
    const phases: string[] = [];
    controller.onChange((state) => phases.push(state.phase));
    await controller.start();
    await controller.answer('yes');
    expect(phases[phases.length - 1]).toBe('done');
    expect(phases).toContain('item');
  });
});
