// Playback of served WAVs, unmodified: no client-side gain, so the
// server's loudness normalization reaches the headphones as rendered.

export class Player {
  private current: HTMLAudioElement | null = null;

  play(url: string, onEnded?: () => void): void {
    this.stop();
    const element = new Audio(url);
    element.addEventListener("ended", () => {
      if (onEnded) onEnded();
    });
    this.current = element;
    void element.play();
  }

  stop(): void {
    if (this.current) {
      this.current.pause();
      this.current = null;
    }
  }
}
